//! Geometry engine for two-view depth from motion.
//!
//! The crate is `no_std` (with `alloc`) when built without the default
//! `std` feature. File formats, calibration parsing and the command line
//! live in the companion `dfm` crate.
//!
//! Frame conventions used throughout:
//!
//! * camera coordinates are x right, y down, z forward (z is depth);
//! * pixel `(u, v)` with integer values at pixel centers;
//! * a [`RigidMotion`] passed to the sweep, warp and pose code maps points
//!   from the camera frame at time `t` into the camera frame at `t - δt`.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod augment;
pub mod closed_form;
pub mod config;
pub mod fusion;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod plane_sweep;
pub mod pose;
pub mod synth;
pub mod voxel;

mod math;
mod par;
mod reduce;

pub use augment::{AugmentError, AugmentationSpec, CropRect};
pub use closed_form::{AbCoefficients, ClosedFormConfig, ClosedFormError, Correspondence, TwoViewSolution};
pub use config::DfmConfig;
pub use fusion::{DepthLossConfig, FusionError, FusionWeights};
pub use geometry::{GeometryError, Intrinsics, Pixel, Point3, RigidMotion, Vector3};
pub use image::{DepthMap, Image, ImageBuffer, Mask};
pub use metrics::{DepthErrorReport, ErrorStats, MetricsError};
pub use plane_sweep::{CostKind, DepthDistribution, DepthLevels, DepthReadout, FrustumVolume, SweepConfig, SweepError};
pub use pose::{PoseError, PoseEstimate, PoseLossConfig};
pub use synth::{Scene, SynthError};
pub use voxel::{BevMap, BevMode, VoxelGrid, VoxelGridSpec};

pub use reduce::pairwise_sum;
