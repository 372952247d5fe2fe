//! Photometric pose recovery with fixed depth, plus the supervised pose
//! loss.

mod loss;
mod optimize;
mod ssim;
mod synthesis;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{unit_quaternion, GeometryError, RigidMotion, Vector3};

pub use loss::{photometric_loss, smoothness_loss, SmoothnessMode};
pub use optimize::{
    gradient_check, optimize_pose, LevelReport, PhotometricObjective, PoseDiagnostics, PoseEstimate, PoseParams,
    Support,
};
pub use ssim::{ssim_map, SSIM_C1, SSIM_C2};
pub use synthesis::synthesize_view;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum PoseError {
    #[error("images or depth map have mismatched sizes")]
    ImageSizeMismatch,
    #[error("no pixel is valid under the mask")]
    EmptyMask,
    #[error("quaternion norm {0} is too small to normalize")]
    ZeroQuaternion(f64),
    #[error("objective became non-finite after {iterations} iterations")]
    Diverged { iterations: usize },
    #[error("only {fraction:.3} of the depth pixels overlap the other view")]
    DegenerateOverlap { fraction: f64 },
    #[error("invalid pose configuration: {0}")]
    InvalidConfig(&'static str),
}

impl From<GeometryError> for PoseError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::ZeroQuaternion(n) => PoseError::ZeroQuaternion(n),
            _ => PoseError::InvalidConfig("invalid geometry"),
        }
    }
}

/// Objective weights and optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseLossConfig {
    /// SSIM weight in the photometric term, in `[0, 1]`.
    pub alpha: f64,
    /// Weight of the edge-aware smoothness term.
    pub lambda_s: f64,
    /// Rotation weight of the supervised pose loss.
    pub lambda_r: f64,
    pub pyramid_levels: usize,
    /// Iteration cap per pyramid level.
    pub max_iterations: usize,
    /// Relative objective decrease below which a level stops.
    pub tolerance: f64,
    pub smoothness: SmoothnessMode,
    /// Drop pixels whose unwarped error is already below the warped one.
    pub automask: bool,
    /// Minimum fraction of valid-depth pixels that must land in the other
    /// view.
    pub min_overlap: f64,
}

impl Default for PoseLossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            lambda_s: 0.001,
            lambda_r: 1.0,
            pyramid_levels: 4,
            max_iterations: 200,
            tolerance: 1e-12,
            smoothness: SmoothnessMode::Normalized,
            automask: true,
            min_overlap: 0.1,
        }
    }
}

impl PoseLossConfig {
    pub fn validate(&self) -> Result<(), PoseError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(PoseError::InvalidConfig("alpha must lie in [0, 1]"));
        }
        if !(self.lambda_s >= 0.0 && self.lambda_r >= 0.0) {
            return Err(PoseError::InvalidConfig("loss weights must be non-negative"));
        }
        if self.pyramid_levels == 0 {
            return Err(PoseError::InvalidConfig("at least one pyramid level is required"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(PoseError::InvalidConfig("tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// `‖t - t̂‖₁ + λ_r min(‖q - q̂/‖q̂‖‖₁, ‖q + q̂/‖q̂‖‖₁)` for a predicted
/// translation and an unnormalized `[w, x, y, z]` quaternion. The minimum
/// over both signs makes `q̂` and `-q̂` score the same.
pub fn supervised_pose_loss(
    t_pred: Vector3<f64>,
    q_pred: [f64; 4],
    gt: &RigidMotion,
    lambda_r: f64,
) -> Result<f64, PoseError> {
    let q_hat = unit_quaternion(q_pred[0], q_pred[1], q_pred[2], q_pred[3])?;
    let qh = q_hat.quaternion();
    let qh = [qh.w, qh.i, qh.j, qh.k];
    let q = gt.quaternion_wxyz();
    let l1 = |sign: f64| -> f64 { (0..4).map(|i| (q[i] - sign * qh[i]).abs()).sum() };
    let lt: f64 = (gt.translation - t_pred).iter().map(|v| v.abs()).sum();
    Ok(lt + lambda_r * l1(1.0).min(l1(-1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supervised_loss_examples() {
        let gt = RigidMotion::from_euler_zyx(0.1, -0.05, 0.02, Vector3::new(0.3, 0.0, 1.0));
        let q = gt.quaternion_wxyz();
        assert!(supervised_pose_loss(gt.translation, q, &gt, 1.0).unwrap() < 1e-15);
        let neg = [-q[0], -q[1], -q[2], -q[3]];
        assert!(supervised_pose_loss(gt.translation, neg, &gt, 1.0).unwrap() < 1e-15);
        let scaled = [3.0 * q[0], 3.0 * q[1], 3.0 * q[2], 3.0 * q[3]];
        assert!(supervised_pose_loss(gt.translation, scaled, &gt, 1.0).unwrap() < 1e-15);
        for lr in [0.0, 1.0, 7.5] {
            let t = gt.translation + Vector3::new(0.1, 0.0, 0.0);
            let l = supervised_pose_loss(t, q, &gt, lr).unwrap();
            assert!((l - 0.1).abs() < 1e-12);
        }
        assert_eq!(supervised_pose_loss(gt.translation, [0.0; 4], &gt, 1.0), Err(PoseError::ZeroQuaternion(0.0)));
    }

    #[test]
    fn config_validation() {
        assert!(PoseLossConfig::default().validate().is_ok());
        let bad = PoseLossConfig { alpha: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = PoseLossConfig { lambda_s: -1.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
