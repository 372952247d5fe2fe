//! File formats, calibration parsing and the `dfm` command line.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod cli;
pub mod distfile;
pub mod format;
pub mod imageio;
pub mod pfm;
pub mod pnm;
pub mod posefile;
pub mod voxelfile;
