//! Monocular prior, stereo confidence, mono/stereo fusion and the depth
//! cross-entropy loss.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Intrinsics;
use crate::image::{depth_is_valid, DepthMap, Image, Mask};
use crate::math;
use crate::plane_sweep::{DepthDistribution, DepthLevels, FrustumVolume};
use crate::reduce::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FusionError {
    #[error("inputs are not on the same grid")]
    GridMismatch,
    #[error("fusion weight {0} outside [0, 1]")]
    WeightOutOfRange(f32),
    #[error("no pixel has both a valid prediction and ground truth")]
    NoValidPixels,
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Focal, class-balanced depth loss parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthLossConfig {
    pub fg_weight: f64,
    pub bg_weight: f64,
    pub gamma: f64,
}

impl Default for DepthLossConfig {
    fn default() -> Self {
        Self { fg_weight: 5.0, bg_weight: 1.0, gamma: 2.0 }
    }
}

impl DepthLossConfig {
    /// Unweighted cross-entropy (`γ = 0`, unit weights).
    pub fn plain() -> Self {
        Self { fg_weight: 1.0, bg_weight: 1.0, gamma: 0.0 }
    }

    fn validate(&self) -> Result<(), FusionError> {
        if !(self.fg_weight > 0.0 && self.bg_weight > 0.0) {
            return Err(FusionError::InvalidConfig("weights must be positive"));
        }
        if !(self.gamma >= 0.0) {
            return Err(FusionError::InvalidConfig("gamma must be non-negative"));
        }
        Ok(())
    }
}

/// Fusion weight `ω` on the frustum grid: either one scalar per pixel
/// (broadcast over bins) or one value per pixel and bin. `ω = 1` trusts the
/// stereo distribution fully.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    width: usize,
    height: usize,
    bins: Option<usize>,
    values: Vec<f32>,
}

impl FusionWeights {
    pub fn per_pixel(weights: Image<f32>) -> Result<Self, FusionError> {
        check_unit_range(weights.as_slice())?;
        Ok(Self { width: weights.width(), height: weights.height(), bins: None, values: weights.into_vec() })
    }

    /// Pixel-major values with bins innermost.
    pub fn per_bin(width: usize, height: usize, bins: usize, values: Vec<f32>) -> Result<Self, FusionError> {
        if values.len() != width * height * bins {
            return Err(FusionError::GridMismatch);
        }
        check_unit_range(&values)?;
        Ok(Self { width, height, bins: Some(bins), values })
    }

    pub fn uniform(width: usize, height: usize, value: f32) -> Result<Self, FusionError> {
        Self::per_pixel(Image::new(width, height, value))
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn is_per_pixel(&self) -> bool {
        self.bins.is_none()
    }

    #[inline]
    pub fn weight(&self, x: usize, y: usize, w: usize) -> f32 {
        let p = y * self.width + x;
        match self.bins {
            None => self.values[p],
            Some(b) => self.values[p * b + w],
        }
    }

    /// Per-pixel map (mean over bins for per-bin weights).
    pub fn to_image(&self) -> Image<f32> {
        Image::from_fn(self.width, self.height, |x, y| match self.bins {
            None => self.weight(x, y, 0),
            Some(b) => (0..b).map(|w| self.weight(x, y, w)).sum::<f32>() / b as f32,
        })
    }
}

fn check_unit_range(v: &[f32]) -> Result<(), FusionError> {
    match v.iter().find(|w| !(**w >= 0.0 && **w <= 1.0)) {
        Some(&bad) => Err(FusionError::WeightOutOfRange(bad)),
        None => Ok(()),
    }
}

/// Soft assignment of a scalar depth map onto the bins: triangular weights
/// `max(1 - |d - d(w)| / (sharpness Δd), 0)`, normalized per pixel. Depths
/// outside the level range are clamped onto it; invalid depths give invalid
/// pixels.
pub fn mono_prior_distribution(depth: &DepthMap, levels: &DepthLevels, sharpness: f64) -> DepthDistribution {
    let l = levels.count();
    let width = sharpness.max(1e-6) * levels.step();
    let mut weights = vec![0.0f32; depth.len() * l];
    for (p, &d) in depth.as_slice().iter().enumerate() {
        if !depth_is_valid(d) {
            continue;
        }
        let d = (d as f64).clamp(levels.d_min(), levels.d_max());
        let center = levels.bin_of(d);
        let reach = math::floor(sharpness.max(1e-6)) as usize + 1;
        let lo = (math::floor(center) as usize).saturating_sub(reach);
        let hi = (math::floor(center) as usize + reach + 1).min(l);
        for w in lo..hi {
            let t = 1.0 - (d - levels.depth(w)).abs() / width;
            if t > 0.0 {
                weights[p * l + w] = t as f32;
            }
        }
    }
    DepthDistribution::from_weights(depth.width(), depth.height(), *levels, weights)
        .expect("buffer sized from the depth map")
}

/// Depth of a flat ground plane seen by a camera mounted `camera_height`
/// meters above it with a level optical axis: `D = fy h / (v - cv)` below
/// the horizon, the far end of the range at and above it.
pub fn ground_plane_depth(
    cam: &Intrinsics,
    width: usize,
    height: usize,
    camera_height: f64,
    levels: &DepthLevels,
) -> DepthMap {
    Image::from_fn(width, height, |_, y| {
        let dv = y as f64 - cam.cv;
        let d = if dv > 0.0 { cam.fy * camera_height / dv } else { levels.d_max() };
        d.clamp(levels.d_min(), levels.d_max()) as f32
    })
}

/// Distinctiveness of each pixel's best match, used as the per-pixel fusion
/// weight.
///
/// `ω = 1 - (c_best + ε) / (c_second + ε)`, clamped to `[0, 1]`, where
/// `c_second` is the lowest cost among the other local minima of the cost
/// curve (the highest valid cost when the curve has a single valley). Flat
/// curves, such as those from a static camera or a textureless patch, give
/// `ω ≈ 0`; pixels without valid bins get 0.
pub fn stereo_confidence(vol: &FrustumVolume) -> FusionWeights {
    const EPS: f64 = 1e-6;
    let img = Image::from_fn(vol.width(), vol.height(), |x, y| {
        let c = vol.pixel(x, y);
        let Some((best, c1)) = c
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &v)| (i, v as f64))
        else {
            return 0.0;
        };
        let mut second = f64::INFINITY;
        let mut worst = c1;
        for (i, &v) in c.iter().enumerate() {
            if !v.is_finite() || i == best {
                continue;
            }
            worst = worst.max(v as f64);
            if is_local_min(c, i) && separated_by_rise(c, best, i) {
                second = second.min(v as f64);
            }
        }
        if !second.is_finite() {
            second = worst;
        }
        (1.0 - (c1 + EPS) / (second + EPS)).clamp(0.0, 1.0) as f32
    });
    FusionWeights::per_pixel(img).expect("confidence is clamped to [0, 1]")
}

/// Peak-ratio confidence of a distribution: `ω = 1 - p_second / p_best`,
/// where `p_second` is the highest other separated peak (the lowest
/// probability when there is a single peak). Invalid pixels get 0.
pub fn distribution_confidence(dist: &DepthDistribution) -> FusionWeights {
    let mut neg = vec![0.0f32; dist.levels().count()];
    let img = Image::from_fn(dist.width(), dist.height(), |x, y| {
        if !dist.is_valid(x, y) {
            return 0.0;
        }
        for (n, &p) in neg.iter_mut().zip(dist.pixel(x, y)) {
            *n = -p;
        }
        let Some((best, c1)) = neg.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, &v)| (i, v as f64))
        else {
            return 0.0;
        };
        let mut second = f64::NEG_INFINITY;
        let mut lowest = -c1;
        for (i, &v) in neg.iter().enumerate() {
            if i == best {
                continue;
            }
            lowest = lowest.min(-v as f64);
            if is_local_min(&neg, i) && separated_by_rise(&neg, best, i) {
                second = second.max(-v as f64);
            }
        }
        if !second.is_finite() {
            second = lowest;
        }
        if !(c1 < 0.0) {
            return 0.0;
        }
        (1.0 - second / -c1).clamp(0.0, 1.0) as f32
    });
    FusionWeights::per_pixel(img).expect("confidence is clamped to [0, 1]")
}

/// Non-strict local minimum; invalid neighbors do not bound it.
fn is_local_min(c: &[f32], i: usize) -> bool {
    let left = if i > 0 { c[i - 1] } else { f32::NAN };
    let right = c.get(i + 1).copied().unwrap_or(f32::NAN);
    (!left.is_finite() || c[i] <= left) && (!right.is_finite() || c[i] <= right)
}

/// `true` when some valid bin strictly between `a` and `b` costs more than
/// bin `b`, so `b` sits in a separate valley from `a`.
fn separated_by_rise(c: &[f32], a: usize, b: usize) -> bool {
    let (lo, hi) = if a < b { (a + 1, b) } else { (b + 1, a) };
    c[lo..hi].iter().any(|&v| v.is_finite() && v > c[b])
}

/// `P = ω P_stereo + (1 - ω) P_mono`, renormalized per pixel. Where only one
/// input is valid it is used alone.
pub fn fuse(
    mono: &DepthDistribution,
    stereo: &DepthDistribution,
    weights: &FusionWeights,
) -> Result<DepthDistribution, FusionError> {
    if !mono.same_grid(stereo)
        || weights.width() != mono.width()
        || weights.height() != mono.height()
        || weights.bins.is_some_and(|b| b != mono.levels().count())
    {
        return Err(FusionError::GridMismatch);
    }
    let l = mono.levels().count();
    let mut out = vec![0.0f32; mono.width() * mono.height() * l];
    for y in 0..mono.height() {
        for x in 0..mono.width() {
            let base = (y * mono.width() + x) * l;
            let (ms, ss) = (mono.is_valid(x, y), stereo.is_valid(x, y));
            let (pm, ps) = (mono.pixel(x, y), stereo.pixel(x, y));
            for w in 0..l {
                let om = match (ms, ss) {
                    (true, true) => weights.weight(x, y, w) as f64,
                    (false, true) => 1.0,
                    (true, false) => 0.0,
                    (false, false) => continue,
                };
                out[base + w] = (om * ps[w] as f64 + (1.0 - om) * pm[w] as f64) as f32;
            }
        }
    }
    Ok(DepthDistribution::from_weights(mono.width(), mono.height(), *mono.levels(), out)
        .expect("buffer sized from the inputs"))
}

/// Result of [`depth_ce_loss`].
#[derive(Debug, Clone, PartialEq)]
pub struct DepthLoss {
    /// Mean over the pixels that have both ground truth and a valid
    /// prediction.
    pub mean: f64,
    /// Weighted per-pixel loss; NaN where the pixel was not counted.
    pub per_pixel: Image<f32>,
    pub valid_pixels: usize,
}

/// Smallest probability fed to the logarithm.
const MIN_PROB: f64 = 1e-12;

/// Focal, balanced cross-entropy between the predicted distribution and a
/// soft one-hot target around the ground-truth depth:
///
/// `Σ_w -max(1 - |d* - d(w)|/Δd, 0) (1 - p_w)^γ log p_w`, weighted by
/// `fg_weight` on foreground pixels and `bg_weight` elsewhere, averaged over
/// the counted pixels.
pub fn depth_ce_loss(
    dist: &DepthDistribution,
    gt: &DepthMap,
    cfg: &DepthLossConfig,
    fg_mask: Option<&Mask>,
) -> Result<DepthLoss, FusionError> {
    cfg.validate()?;
    if gt.width() != dist.width() || gt.height() != dist.height() || fg_mask.is_some_and(|m| !m.same_size(gt)) {
        return Err(FusionError::GridMismatch);
    }
    let levels = dist.levels();
    let mut per_pixel = Image::new(gt.width(), gt.height(), f32::NAN);
    let mut terms = Vec::new();
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            let d = gt.get(x, y);
            if !depth_is_valid(d) || !dist.is_valid(x, y) {
                continue;
            }
            let d = d as f64;
            let p = dist.pixel(x, y);
            // renormalize in f64 to undo the f32 storage rounding
            let total: f64 = p.iter().map(|&v| v as f64).sum();
            let b = levels.bin_of(d);
            let mut sum = 0.0;
            for (w, &pw) in p.iter().enumerate() {
                let target = 1.0 - (b - w as f64).abs();
                if target <= 0.0 {
                    continue;
                }
                let pw = (pw as f64 / total).clamp(MIN_PROB, 1.0);
                sum -= target * math::powf(1.0 - pw, cfg.gamma) * math::ln(pw);
            }
            let weight = if fg_mask.is_some_and(|m| m.get(x, y)) { cfg.fg_weight } else { cfg.bg_weight };
            let v = weight * sum;
            per_pixel.set(x, y, v as f32);
            terms.push(v);
        }
    }
    if terms.is_empty() {
        return Err(FusionError::NoValidPixels);
    }
    Ok(DepthLoss { mean: pairwise_sum(&terms) / terms.len() as f64, per_pixel, valid_pixels: terms.len() })
}
