//! Closed-form object depth for binocular, parallel two-view and general
//! two-view camera pairs.
//!
//! In the general case the motion maps the first camera frame into the
//! second: `X2 = R X1 + t`. For a purely translating camera that moved by
//! `Δx` sideways and `ΔD` forward between the two shots (`Δx = x1 - x2`,
//! `ΔD = D1 - D2`), this is `R = I`, `t = (-Δx, 0, -ΔD)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Intrinsics, RigidMotion, Vector3};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ClosedFormError {
    #[error("disparity {0} is below the configured threshold")]
    ZeroDisparity(f64),
    #[error("denominator of the {form:?} form vanishes ({value})")]
    DegenerateDenominator { form: DepthForm, value: f64 },
    #[error("neither the u nor the v form has a usable denominator")]
    NoValidSolution,
    #[error("computed depth {0} is not positive")]
    NonPhysicalDepth(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

/// Which image axis a general two-view depth was solved from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthForm {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClosedFormConfig {
    /// Smallest accepted `|u1 - u2|` (pixels).
    pub eps_disparity: f64,
    /// Smallest accepted denominator magnitude in the general case.
    pub eps_denominator: f64,
}

impl Default for ClosedFormConfig {
    fn default() -> Self {
        Self { eps_disparity: 1e-6, eps_denominator: 1e-9 }
    }
}

/// One matched point: `(u1, v1)` in the first frame, `(u2, v2)` in the
/// second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub u1: f64,
    pub v1: f64,
    pub u2: f64,
    pub v2: f64,
}

/// `A_i = r_i1 (u1-cu)/fx + r_i2 (v1-cv)/fy + r_i3` and `B_i = t_i`, so that
/// the second-frame coordinates are `A_i D1 + B_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbCoefficients {
    pub a: [f64; 3],
    pub b: [f64; 3],
}

/// Depth of the first-frame point from one of the two linear forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormSolution {
    pub depth: f64,
    pub denominator: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoViewSolution {
    pub coefficients: AbCoefficients,
    pub from_u: Option<FormSolution>,
    pub from_v: Option<FormSolution>,
}

impl TwoViewSolution {
    /// First-frame depth combining both forms, each weighted by its
    /// denominator magnitude (the depth error scales with `1/|den|`).
    pub fn depth1(&self) -> f64 {
        match (self.from_u, self.from_v) {
            (Some(a), Some(b)) => {
                let (wa, wb) = (a.denominator.abs(), b.denominator.abs());
                (wa * a.depth + wb * b.depth) / (wa + wb)
            }
            (Some(a), None) => a.depth,
            (None, Some(b)) => b.depth,
            // constructors never produce this
            (None, None) => f64::NAN,
        }
    }

    /// Second-frame depth `A3 D1 + B3`.
    pub fn depth2(&self) -> f64 {
        self.coefficients.a[2] * self.depth1() + self.coefficients.b[2]
    }

    /// `true` when either reconstructed depth is not positive.
    pub fn non_physical(&self) -> bool {
        !(self.depth1() > 0.0 && self.depth2() > 0.0)
    }
}

/// Binocular depth `D = f b / d`.
pub fn binocular_depth(
    focal: f64,
    baseline: f64,
    disparity: f64,
    cfg: &ClosedFormConfig,
) -> Result<f64, ClosedFormError> {
    if !(focal > 0.0) {
        return Err(ClosedFormError::InvalidParameter("focal length must be positive"));
    }
    if !(baseline > 0.0) {
        return Err(ClosedFormError::InvalidParameter("baseline must be positive"));
    }
    if !(disparity.abs() >= cfg.eps_disparity) {
        return Err(ClosedFormError::ZeroDisparity(disparity));
    }
    Ok(focal * baseline / disparity)
}

/// The baseline a translating camera effectively forms for a point seen at
/// column `u2` in the second frame: `Δx - ((u2 - cu)/f) ΔD`.
pub fn effective_baseline(dx: f64, dd: f64, u2: f64, cam: &Intrinsics) -> f64 {
    dx - (u2 - cam.cu) / cam.fx * dd
}

/// First-frame depth for a camera that only translated by `Δx` (sideways)
/// and `ΔD` (forward) between the frames.
pub fn parallel_two_view_depth(
    cam: &Intrinsics,
    u1: f64,
    u2: f64,
    dx: f64,
    dd: f64,
    cfg: &ClosedFormConfig,
) -> Result<f64, ClosedFormError> {
    let disparity = u1 - u2;
    if !(disparity.abs() >= cfg.eps_disparity) {
        return Err(ClosedFormError::ZeroDisparity(disparity));
    }
    let depth = cam.fx * effective_baseline(dx, dd, u2, cam) / disparity;
    if depth > 0.0 {
        Ok(depth)
    } else {
        Err(ClosedFormError::NonPhysicalDepth(depth))
    }
}

pub fn ab_coefficients(cam: &Intrinsics, motion: &RigidMotion, corr: &Correspondence) -> AbCoefficients {
    let r = motion.rotation_matrix();
    let xn = (corr.u1 - cam.cu) / cam.fx;
    let yn = (corr.v1 - cam.cv) / cam.fy;
    let a = [0, 1, 2].map(|i| r[(i, 0)] * xn + r[(i, 1)] * yn + r[(i, 2)]);
    let t = motion.translation;
    AbCoefficients { a, b: [t.x, t.y, t.z] }
}

/// Depth of a point in both frames of a general rigid camera motion
/// (`motion` maps frame-1 coordinates into frame 2).
///
/// Both the u-derived and v-derived first-frame depths are returned when
/// their denominators are usable; at least one must be.
pub fn general_two_view_depth(
    cam: &Intrinsics,
    motion: &RigidMotion,
    corr: &Correspondence,
    cfg: &ClosedFormConfig,
) -> Result<TwoViewSolution, ClosedFormError> {
    let coefficients = ab_coefficients(cam, motion, corr);
    let AbCoefficients { a, b } = coefficients;

    let solve = |n2: f64, ai: f64, bi: f64| {
        let denominator = n2 * a[2] - ai;
        (denominator.abs() >= cfg.eps_denominator)
            .then(|| FormSolution { depth: (bi - n2 * b[2]) / denominator, denominator })
    };
    let from_u = solve((corr.u2 - cam.cu) / cam.fx, a[0], b[0]);
    let from_v = solve((corr.v2 - cam.cv) / cam.fy, a[1], b[1]);
    if from_u.is_none() && from_v.is_none() {
        return Err(ClosedFormError::NoValidSolution);
    }
    Ok(TwoViewSolution { coefficients, from_u, from_v })
}

/// Like [`general_two_view_depth`] but returns an error naming the u form
/// when its denominator vanishes, even if the v form is usable.
pub fn general_two_view_depth_u(
    cam: &Intrinsics,
    motion: &RigidMotion,
    corr: &Correspondence,
    cfg: &ClosedFormConfig,
) -> Result<FormSolution, ClosedFormError> {
    let ab = ab_coefficients(cam, motion, corr);
    let n2 = (corr.u2 - cam.cu) / cam.fx;
    let denominator = n2 * ab.a[2] - ab.a[0];
    if !(denominator.abs() >= cfg.eps_denominator) {
        return Err(ClosedFormError::DegenerateDenominator { form: DepthForm::U, value: denominator });
    }
    Ok(FormSolution { depth: (ab.b[0] - n2 * ab.b[2]) / denominator, denominator })
}

/// Depth of a moving object's 3D center: the object's own translation
/// `object_translation` (expressed in the second camera frame) is added to
/// the ego-motion translation. Rotation of the object does not move its
/// center, so only translation enters.
pub fn moving_center_depth(
    cam: &Intrinsics,
    ego: &RigidMotion,
    object_translation: &Vector3<f64>,
    corr: &Correspondence,
    cfg: &ClosedFormConfig,
) -> Result<TwoViewSolution, ClosedFormError> {
    let combined = RigidMotion::new(ego.rotation, ego.translation + object_translation);
    general_two_view_depth(cam, &combined, corr, cfg)
}
