//! Single configuration schema holding every tunable default.
//!
//! Every field has a default, so a partial JSON document overrides only
//! the keys it names.

use serde::{Deserialize, Serialize};

use crate::closed_form::ClosedFormConfig;
use crate::fusion::DepthLossConfig;
use crate::plane_sweep::{DepthLevels, SweepConfig, SweepError};
use crate::pose::PoseLossConfig;
use crate::voxel::VoxelGridSpec;

/// Depth hypothesis range: `count` depth-uniform levels from `d_min` to
/// `d_max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelsConfig {
    pub d_min: f64,
    pub d_max: f64,
    pub count: usize,
}

impl Default for LevelsConfig {
    fn default() -> Self {
        Self { d_min: 2.0, d_max: 59.6, count: 288 }
    }
}

impl LevelsConfig {
    pub fn levels(&self) -> Result<DepthLevels, SweepError> {
        DepthLevels::from_range(self.d_min, self.d_max, self.count)
    }
}

/// Monocular prior and fusion settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    /// Half-width of the triangular mono prior, in bins.
    pub mono_sharpness: f64,
    /// Camera height above the ground plane for the heuristic mono prior.
    pub camera_height: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self { mono_sharpness: 2.0, camera_height: 1.65 }
    }
}

/// Random augmentation ranges for training-style pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    pub crop_height: usize,
    pub crop_width: usize,
    pub flip_probability: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { scale_min: 0.95, scale_max: 1.05, crop_height: 320, crop_width: 1248, flip_probability: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DfmConfig {
    pub levels: LevelsConfig,
    pub sweep: SweepConfig,
    pub closed_form: ClosedFormConfig,
    pub fusion: FusionConfig,
    pub depth_loss: DepthLossConfig,
    pub pose: PoseLossConfig,
    pub voxel: VoxelGridSpec,
    pub augment: AugmentConfig,
}
