use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::{depth_is_valid, DepthMap, ImageBuffer, Mask};
use crate::math;
use crate::reduce::pairwise_sum;

use super::ssim::{window_indices, WindowSsim};
use super::PoseError;

/// Depth scale used by the smoothness term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SmoothnessMode {
    /// Depth divided by its mean over valid pixels.
    #[default]
    Normalized,
    /// Metric depth as given.
    Metric,
}

/// Pixels whose whole 3x3 window (edge-replicated) lies inside `valid`.
pub(crate) fn erode(valid: &[bool], width: usize, height: usize) -> Vec<bool> {
    let mut out = alloc::vec![false; valid.len()];
    for y in 0..height {
        for x in 0..width {
            out[y * width + x] = window_indices(width, height, x, y).iter().all(|&q| valid[q]);
        }
    }
    out
}

/// Mean over the eroded mask of `α/2 (1 - SSIM) + (1 - α) |I_t - I_synth|`.
///
/// SSIM needs the full 3x3 window, so a pixel counts only when its whole
/// window is valid.
pub fn photometric_loss(
    img_t: &ImageBuffer,
    img_synth: &ImageBuffer,
    mask: &Mask,
    alpha: f64,
) -> Result<f64, PoseError> {
    if !img_t.same_size(img_synth) || !img_t.same_size(mask) {
        return Err(PoseError::ImageSizeMismatch);
    }
    let (w, h) = (img_t.width(), img_t.height());
    let a: Vec<f64> = img_t.as_slice().iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = img_synth.as_slice().iter().map(|&v| v as f64).collect();
    let counted = erode(mask.as_slice(), w, h);
    let mut terms = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if !counted[p] {
                continue;
            }
            let s = WindowSsim::new(&a, &b, &window_indices(w, h, x, y)).ssim;
            terms.push(alpha * 0.5 * (1.0 - s) + (1.0 - alpha) * (a[p] - b[p]).abs());
        }
    }
    if terms.is_empty() {
        return Err(PoseError::EmptyMask);
    }
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// Edge-aware smoothness `mean |∂x D̂| e^{-|∂x I|} + mean |∂y D̂| e^{-|∂y I|}`
/// with forward differences over pairs of valid depth pixels. Returns 0
/// when no pair is valid.
pub fn smoothness_loss(depth: &DepthMap, img_t: &ImageBuffer, mode: SmoothnessMode) -> Result<f64, PoseError> {
    if !depth.same_size(img_t) {
        return Err(PoseError::ImageSizeMismatch);
    }
    let valid: Vec<f64> = depth.as_slice().iter().filter(|d| depth_is_valid(**d)).map(|&d| d as f64).collect();
    if valid.is_empty() {
        return Ok(0.0);
    }
    let scale = match mode {
        SmoothnessMode::Normalized => valid.len() as f64 / pairwise_sum(&valid),
        SmoothnessMode::Metric => 1.0,
    };
    let (w, h) = (depth.width(), depth.height());
    let term = |x0: usize, y0: usize, x1: usize, y1: usize| -> Option<f64> {
        let (d0, d1) = (depth.get(x0, y0), depth.get(x1, y1));
        if !(depth_is_valid(d0) && depth_is_valid(d1)) {
            return None;
        }
        let dd = (d1 as f64 - d0 as f64) * scale;
        let di = img_t.get(x1, y1) as f64 - img_t.get(x0, y0) as f64;
        Some(dd.abs() * math::exp(-di.abs()))
    };
    let mut tx = Vec::new();
    let mut ty = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                tx.extend(term(x, y, x + 1, y));
            }
            if y + 1 < h {
                ty.extend(term(x, y, x, y + 1));
            }
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            pairwise_sum(v) / v.len() as f64
        }
    };
    Ok(mean(&tx) + mean(&ty))
}
