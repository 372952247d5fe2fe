//! Windowed SSIM on `[0, 1]` intensities.

use crate::image::{Image, ImageBuffer};

use super::PoseError;

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Samples in the 3x3 box window.
pub(crate) const WINDOW: usize = 9;

/// Flat indices of the 3x3 window around `(x, y)`; out-of-image neighbors
/// are replaced by the nearest edge pixel.
#[inline]
pub(crate) fn window_indices(width: usize, height: usize, x: usize, y: usize) -> [usize; WINDOW] {
    let mut out = [0; WINDOW];
    let mut k = 0;
    for dy in [-1isize, 0, 1] {
        let yy = (y as isize + dy).clamp(0, height as isize - 1) as usize;
        for dx in [-1isize, 0, 1] {
            let xx = (x as isize + dx).clamp(0, width as isize - 1) as usize;
            out[k] = yy * width + xx;
            k += 1;
        }
    }
    out
}

/// SSIM terms of one window. `ssim = a1 * a2 / (b1 * b2)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WindowSsim {
    pub mu_a: f64,
    pub mu_b: f64,
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub ssim: f64,
}

impl WindowSsim {
    #[inline]
    pub fn new(a: &[f64], b: &[f64], idx: &[usize; WINDOW]) -> Self {
        let n = WINDOW as f64;
        let mut sa = 0.0;
        let mut sb = 0.0;
        for &q in idx {
            sa += a[q];
            sb += b[q];
        }
        let (mu_a, mu_b) = (sa / n, sb / n);
        let (mut vaa, mut vbb, mut vab) = (0.0, 0.0, 0.0);
        for &q in idx {
            let (da, db) = (a[q] - mu_a, b[q] - mu_b);
            vaa += da * da;
            vbb += db * db;
            vab += da * db;
        }
        let a1 = 2.0 * mu_a * mu_b + SSIM_C1;
        let a2 = 2.0 * (vab / n) + SSIM_C2;
        let b1 = mu_a * mu_a + mu_b * mu_b + SSIM_C1;
        let b2 = vaa / n + vbb / n + SSIM_C2;
        Self { mu_a, mu_b, a1, a2, b1, b2, ssim: (a1 * a2) / (b1 * b2) }
    }

    /// `∂ssim / ∂b_q` for one window sample with values `a_q`, `b_q`.
    #[inline]
    pub fn d_db(&self, a_q: f64, b_q: f64) -> f64 {
        let n = WINDOW as f64;
        let da1 = 2.0 * self.mu_a / n;
        let da2 = 2.0 * (a_q - self.mu_a) / n;
        let db1 = 2.0 * self.mu_b / n;
        let db2 = 2.0 * (b_q - self.mu_b) / n;
        (da1 * self.a2 + self.a1 * da2) / (self.b1 * self.b2) - self.ssim * (db1 / self.b1 + db2 / self.b2)
    }
}

/// Per-pixel SSIM over a 3x3 box window with edge replication.
pub fn ssim_map(a: &ImageBuffer, b: &ImageBuffer) -> Result<Image<f64>, PoseError> {
    if !a.same_size(b) {
        return Err(PoseError::ImageSizeMismatch);
    }
    let (w, h) = (a.width(), a.height());
    let av: alloc::vec::Vec<f64> = a.as_slice().iter().map(|&v| v as f64).collect();
    let bv: alloc::vec::Vec<f64> = b.as_slice().iter().map(|&v| v as f64).collect();
    Ok(Image::from_fn(w, h, |x, y| WindowSsim::new(&av, &bv, &window_indices(w, h, x, y)).ssim))
}
