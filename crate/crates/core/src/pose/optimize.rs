//! Coarse-to-fine BFGS on the photometric objective with an analytic
//! gradient.
//!
//! Parameters are `(t, θ)` with `R = Exp(θ)`. Depth is fixed, so the
//! smoothness term is a per-level constant and only enters the reported
//! loss.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::geometry::{so3_left_jacobian, Intrinsics, Pixel, RigidMotion, Vector3};
use crate::image::{depth_is_valid, snap_to_hull, DepthMap, ImageBuffer};
use crate::par;
use crate::reduce::pairwise_sum;

use super::loss::{erode, smoothness_loss};
use super::ssim::{window_indices, WindowSsim, WINDOW};
use super::{PoseError, PoseLossConfig};

/// Smallest image side kept in the pyramid.
const MIN_LEVEL_SIZE: usize = 16;
/// Armijo sufficient-decrease constant.
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;
/// Largest parameter step tried first along a steepest-descent direction.
const FIRST_STEP: f64 = 0.05;

/// Translation followed by rotation vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseParams(pub [f64; 6]);

impl PoseParams {
    pub fn from_motion(m: &RigidMotion) -> Self {
        let t = m.translation;
        let r = m.rotation.scaled_axis();
        Self([t.x, t.y, t.z, r.x, r.y, r.z])
    }

    pub fn to_motion(&self) -> RigidMotion {
        let p = self.0;
        RigidMotion::from_rotation_vector(Vector3::new(p[3], p[4], p[5]), Vector3::new(p[0], p[1], p[2]))
    }

    fn vector(&self) -> Vector6<f64> {
        Vector6::from_row_slice(&self.0)
    }

    fn from_vector(v: &Vector6<f64>) -> Self {
        Self([v[0], v[1], v[2], v[3], v[4], v[5]])
    }
}

/// Which pixels enter the objective.
#[derive(Debug, Clone, PartialEq)]
pub enum Support {
    /// Recomputed at every evaluation from where the pixels land.
    Live,
    /// Fixed sets from an earlier evaluation. Off-image samples are clamped
    /// to the border, so the objective is continuous in the parameters.
    Frozen { sampled: Vec<bool>, counted: Vec<bool> },
}

/// Objective value and gradient at one pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub gradient: [f64; 6],
    /// Pixels that entered the mean.
    pub counted: usize,
    /// Fraction of valid-depth pixels that land inside the other image.
    pub overlap: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Sample {
    ok: bool,
    value: f64,
    jac: [f64; 6],
}

/// Photometric objective `L_p` of one pyramid level.
#[derive(Debug, Clone)]
pub struct PhotometricObjective {
    width: usize,
    height: usize,
    cam: Intrinsics,
    alpha: f64,
    target: Vec<f64>,
    prev: ImageBuffer,
    points: Vec<Option<Vector3<f64>>>,
    valid_depth: usize,
    /// Pixels left in by auto-masking.
    keep: Option<Vec<bool>>,
}

impl PhotometricObjective {
    pub fn new(
        img_t: &ImageBuffer,
        img_prev: &ImageBuffer,
        depth_t: &DepthMap,
        cam: &Intrinsics,
        alpha: f64,
    ) -> Result<Self, PoseError> {
        if !img_t.same_size(img_prev) || !img_t.same_size(depth_t) {
            return Err(PoseError::ImageSizeMismatch);
        }
        let (w, h) = (img_t.width(), img_t.height());
        let points: Vec<Option<Vector3<f64>>> = (0..w * h)
            .map(|p| {
                let d = depth_t.as_slice()[p];
                depth_is_valid(d).then(|| cam.ray(Pixel::new((p % w) as f64, (p / w) as f64)) * d as f64)
            })
            .collect();
        Ok(Self {
            width: w,
            height: h,
            cam: *cam,
            alpha,
            target: img_t.as_slice().iter().map(|&v| v as f64).collect(),
            prev: img_prev.clone(),
            valid_depth: points.iter().filter(|p| p.is_some()).count(),
            points,
            keep: None,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Fixes the auto-mask at `params`: a pixel is dropped when comparing
    /// it against the unwarped previous frame already gives a strictly
    /// lower error than the warped sample.
    pub fn freeze_automask(&mut self, params: &PoseParams) {
        self.keep = None;
        let samples = self.samples(params, None);
        let (w, h) = (self.width, self.height);
        let prev: Vec<f64> = self.prev.as_slice().iter().map(|&v| v as f64).collect();
        let warped: Vec<f64> = samples.iter().map(|s| s.value).collect();
        let ok: Vec<bool> = samples.iter().map(|s| s.ok).collect();
        let counted = erode(&ok, w, h);
        let keep = (0..w * h)
            .map(|p| {
                if !counted[p] {
                    return true;
                }
                let idx = window_indices(w, h, p % w, p / w);
                let e_id = self.pixel_error(&prev, &idx, p);
                let e_warp = self.pixel_error(&warped, &idx, p);
                !(e_id < e_warp)
            })
            .collect();
        self.keep = Some(keep);
    }

    fn pixel_error(&self, b: &[f64], idx: &[usize; WINDOW], p: usize) -> f64 {
        let s = WindowSsim::new(&self.target, b, idx).ssim;
        self.alpha * 0.5 * (1.0 - s) + (1.0 - self.alpha) * (self.target[p] - b[p]).abs()
    }

    /// Sample and count sets at `params`, for use as [`Support::Frozen`].
    pub fn support_at(&self, params: &PoseParams) -> Support {
        let samples = self.samples(params, None);
        let sampled: Vec<bool> = samples.iter().map(|s| s.ok).collect();
        let counted = self.live_counted(&sampled);
        Support::Frozen { sampled, counted }
    }

    fn live_counted(&self, sampled: &[bool]) -> Vec<bool> {
        let mut counted = erode(sampled, self.width, self.height);
        if let Some(keep) = &self.keep {
            counted.iter_mut().zip(keep).for_each(|(c, k)| *c &= *k);
        }
        counted
    }

    fn samples(&self, params: &PoseParams, frozen: Option<&[bool]>) -> Vec<Sample> {
        let motion = params.to_motion();
        let rot = motion.rotation.to_rotation_matrix().into_inner();
        let t = motion.translation;
        let p = params.0;
        let jl_t: Matrix3<f64> = so3_left_jacobian(&Vector3::new(p[3], p[4], p[5])).transpose();
        let (w, h) = (self.width, self.height);
        let (wmax, hmax) = ((w - 1) as f64, (h - 1) as f64);
        let cam = self.cam;
        let mut out = vec![Sample::default(); w * h];
        par::for_each_chunk(&mut out, w, |y, row| {
            for (x, s) in row.iter_mut().enumerate() {
                let idx = y * w + x;
                if frozen.is_some_and(|f| !f[idx]) {
                    continue;
                }
                let Some(pt) = self.points[idx] else { continue };
                let r = rot * pt;
                let q = r + t;
                if !(q.z > 1e-9) {
                    continue;
                }
                let (u, v) = (cam.fx * q.x / q.z + cam.cu, cam.fy * q.y / q.z + cam.cv);
                let (val, mut gu, mut gv, (su, sv)) = if frozen.is_some() {
                    let (cu, cv) = (u.clamp(0.0, wmax), v.clamp(0.0, hmax));
                    let Some((val, gu, gv)) = self.prev.bicubic_with_gradient(cu, cv) else {
                        continue;
                    };
                    (val, gu, gv, (cu == u, cv == v))
                } else {
                    let (u, v) = snap_to_hull(u, v, w, h);
                    let Some((val, gu, gv)) = self.prev.bicubic_with_gradient(u, v) else {
                        continue;
                    };
                    (val, gu, gv, (true, true))
                };
                if !su {
                    gu = 0.0;
                }
                if !sv {
                    gv = 0.0;
                }
                let iz = 1.0 / q.z;
                let g = Vector3::new(
                    gu * cam.fx * iz,
                    gv * cam.fy * iz,
                    -(gu * cam.fx * q.x + gv * cam.fy * q.y) * iz * iz,
                );
                let gr = jl_t * r.cross(&g);
                *s = Sample { ok: true, value: val, jac: [g.x, g.y, g.z, gr.x, gr.y, gr.z] };
            }
        });
        out
    }

    /// Mean per-pixel error and its gradient with respect to the six pose
    /// parameters.
    pub fn evaluate(&self, params: &PoseParams, support: &Support) -> Result<Evaluation, PoseError> {
        let (w, h) = (self.width, self.height);
        let (samples, counted) = match support {
            Support::Live => {
                let s = self.samples(params, None);
                let ok: Vec<bool> = s.iter().map(|s| s.ok).collect();
                let c = self.live_counted(&ok);
                (s, c)
            }
            Support::Frozen { sampled, counted } => {
                if sampled.len() != w * h || counted.len() != w * h {
                    return Err(PoseError::ImageSizeMismatch);
                }
                let s = self.samples(params, Some(sampled));
                let c = counted
                    .iter()
                    .enumerate()
                    .map(|(p, &c)| c && window_indices(w, h, p % w, p / w).iter().all(|&q| s[q].ok))
                    .collect();
                (s, c)
            }
        };
        let in_view = samples.iter().filter(|s| s.ok).count();
        let overlap = if self.valid_depth == 0 { 0.0 } else { in_view as f64 / self.valid_depth as f64 };
        let b: Vec<f64> = samples.iter().map(|s| s.value).collect();
        let a = &self.target;
        let alpha = self.alpha;
        let mut terms = Vec::new();
        let mut coeff = vec![0.0f64; w * h];
        for p in 0..w * h {
            if !counted[p] {
                continue;
            }
            let idx = window_indices(w, h, p % w, p / w);
            let ws = WindowSsim::new(a, &b, &idx);
            let diff = a[p] - b[p];
            terms.push(alpha * 0.5 * (1.0 - ws.ssim) + (1.0 - alpha) * diff.abs());
            for &q in &idx {
                coeff[q] -= alpha * 0.5 * ws.d_db(a[q], b[q]);
            }
            coeff[p] -= (1.0 - alpha) * sign(diff);
        }
        if terms.is_empty() {
            return Err(PoseError::EmptyMask);
        }
        let n = terms.len() as f64;
        let mut grad = [0.0f64; 6];
        for (k, g) in grad.iter_mut().enumerate() {
            let parts: Vec<f64> =
                (0..w * h).filter(|&q| coeff[q] != 0.0).map(|q| coeff[q] * samples[q].jac[k]).collect();
            *g = pairwise_sum(&parts) / n;
        }
        Ok(Evaluation { loss: pairwise_sum(&terms) / n, gradient: grad, counted: terms.len(), overlap })
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Analytic gradient against central differences on a frozen support.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub analytic: [f64; 6],
    pub numeric: [f64; 6],
    /// `‖analytic - numeric‖ / ‖numeric‖`.
    pub relative_error: f64,
}

pub fn gradient_check(obj: &PhotometricObjective, params: &PoseParams, h: f64) -> Result<GradientCheck, PoseError> {
    let support = obj.support_at(params);
    let analytic = obj.evaluate(params, &support)?.gradient;
    let mut numeric = [0.0; 6];
    for (k, g) in numeric.iter_mut().enumerate() {
        let mut plus = *params;
        plus.0[k] += h;
        let mut minus = *params;
        minus.0[k] -= h;
        let fp = obj.evaluate(&plus, &support)?.loss;
        let fm = obj.evaluate(&minus, &support)?.loss;
        *g = (fp - fm) / (2.0 * h);
    }
    let diff: f64 = (0..6)
        .map(|k| {
            let e = analytic[k] - numeric[k];
            e * e
        })
        .sum();
    let norm: f64 = numeric.iter().map(|v| v * v).sum();
    let relative_error = if norm > 0.0 {
        crate::math::sqrt(diff / norm)
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(GradientCheck { analytic, numeric, relative_error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub width: usize,
    pub height: usize,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseDiagnostics {
    /// `L_p + λ_s L_s` at the finest level.
    pub final_loss: f64,
    pub photometric: f64,
    pub smoothness: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub overlap: f64,
    /// Relative error of the analytic gradient against central differences
    /// at the returned pose.
    pub gradient_check_residual: f64,
    /// Coarsest level first.
    pub levels: Vec<LevelReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub motion: RigidMotion,
    pub diagnostics: PoseDiagnostics,
}

/// Recovers the motion taking frame `t` into the previous frame by
/// minimizing the photometric error of the synthesized view, coarse to
/// fine. Every accepted step lowers the level's objective.
pub fn optimize_pose(
    img_t: &ImageBuffer,
    img_prev: &ImageBuffer,
    depth_t: &DepthMap,
    cam: &Intrinsics,
    cfg: &PoseLossConfig,
    init: &RigidMotion,
) -> Result<PoseEstimate, PoseError> {
    cfg.validate()?;
    if !img_t.same_size(img_prev) || !img_t.same_size(depth_t) {
        return Err(PoseError::ImageSizeMismatch);
    }
    let mut pyramid = vec![(img_t.clone(), img_prev.clone(), depth_t.clone(), *cam)];
    while pyramid.len() < cfg.pyramid_levels {
        let (a, b, d, c) = pyramid.last().expect("pyramid starts non-empty");
        if a.width() / 2 < MIN_LEVEL_SIZE || a.height() / 2 < MIN_LEVEL_SIZE {
            break;
        }
        let next = (a.downsample2(), b.downsample2(), d.downsample2(), c.half_resolution());
        pyramid.push(next);
    }

    let mut params = PoseParams::from_motion(init);
    let mut reports = Vec::new();
    let mut last = None;
    for (i, (a, b, d, c)) in pyramid.iter().enumerate().rev() {
        let mut obj = PhotometricObjective::new(a, b, d, c, cfg.alpha)?;
        if cfg.automask {
            obj.freeze_automask(&params);
        }
        let (p, report, eval) = minimize_level(&obj, params, cfg, i == 0)?;
        params = p;
        reports.push(report);
        last = Some((obj, eval));
    }
    let (obj, eval) = last.expect("at least one level");
    let total_iterations = reports.iter().map(|r| r.iterations).sum();
    let accepted = reports.iter().map(|r| r.accepted_steps).sum();
    let check = gradient_check(&obj, &params, 1e-5).map(|g| g.relative_error);
    let smooth = smoothness_loss(depth_t, img_t, cfg.smoothness)?;
    Ok(PoseEstimate {
        motion: params.to_motion(),
        diagnostics: PoseDiagnostics {
            final_loss: eval.loss + cfg.lambda_s * smooth,
            photometric: eval.loss,
            smoothness: smooth,
            iterations: total_iterations,
            accepted_steps: accepted,
            overlap: eval.overlap,
            gradient_check_residual: check.unwrap_or(f64::NAN),
            levels: reports,
        },
    })
}

fn minimize_level(
    obj: &PhotometricObjective,
    start: PoseParams,
    cfg: &PoseLossConfig,
    finest: bool,
) -> Result<(PoseParams, LevelReport, Evaluation), PoseError> {
    let degenerate = |fraction: f64| PoseError::DegenerateOverlap { fraction };
    let mut eval = match obj.evaluate(&start, &Support::Live) {
        Ok(e) => e,
        Err(PoseError::EmptyMask) => return Err(degenerate(0.0)),
        Err(e) => return Err(e),
    };
    if eval.overlap < cfg.min_overlap {
        return Err(degenerate(eval.overlap));
    }
    let initial_loss = eval.loss;
    let mut x = start.vector();
    let mut g = Vector6::from_row_slice(&eval.gradient);
    let mut hinv = Matrix6::<f64>::identity();
    let mut fresh = true;
    let mut iterations = 0;
    let mut accepted = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        if g.amax() == 0.0 {
            break;
        }
        let mut d = -(hinv * g);
        if g.dot(&d) >= 0.0 {
            hinv = Matrix6::identity();
            fresh = true;
            d = -g;
        }
        let mut step = if fresh { (FIRST_STEP / d.amax()).min(1.0) } else { 1.0 };
        let slope = g.dot(&d);
        let mut next = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = PoseParams::from_vector(&(x + d * step));
            if let Ok(e) = obj.evaluate(&trial, &Support::Live) {
                if !e.loss.is_finite() {
                    return Err(PoseError::Diverged { iterations });
                }
                if e.loss <= eval.loss + ARMIJO * step * slope {
                    next = Some((trial, e));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((trial, e)) = next else {
            if fresh {
                // no decrease even along steepest descent
                break;
            }
            hinv = Matrix6::identity();
            fresh = true;
            continue;
        };
        let x_new = trial.vector();
        let g_new = Vector6::from_row_slice(&e.gradient);
        let s = x_new - x;
        let y = g_new - g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                hinv = Matrix6::identity() * (sy / y.dot(&y));
            }
            let rho = 1.0 / sy;
            let i = Matrix6::<f64>::identity();
            hinv = (i - s * y.transpose() * rho) * hinv * (i - y * s.transpose() * rho) + s * s.transpose() * rho;
            fresh = false;
        }
        let decrease = eval.loss - e.loss;
        x = x_new;
        g = g_new;
        eval = e;
        accepted += 1;
        if decrease <= cfg.tolerance * eval.loss.abs().max(f64::MIN_POSITIVE) && !fresh {
            break;
        }
    }
    if finest && eval.overlap < cfg.min_overlap {
        return Err(degenerate(eval.overlap));
    }
    let report = LevelReport {
        width: obj.width(),
        height: obj.height(),
        iterations,
        accepted_steps: accepted,
        initial_loss,
        final_loss: eval.loss,
    };
    Ok((PoseParams::from_vector(&x), report, eval))
}
