//! Dense row-major 2D buffers: intensity images, depth maps and masks.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

/// Row-major 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Grayscale intensities, nominally in `[0, 1]`.
pub type ImageBuffer = Image<f32>;

/// Metric depth per pixel. Non-finite or non-positive entries are invalid.
pub type DepthMap = Image<f32>;

/// Per-pixel validity or foreground flags.
pub type Mask = Image<bool>;

impl<T: Copy> Image<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    /// Wraps an existing buffer; `None` when the length does not match.
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height).then_some(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn same_size<U>(&self, other: &Image<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image { width: self.width, height: self.height, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Mirrors the columns.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.get(self.width - 1 - x, y))
    }
}

impl Image<f32> {
    /// Bilinear lookup at continuous pixel coordinates.
    ///
    /// Defined on the closed hull of pixel centers, `[0, w-1] x [0, h-1]`;
    /// anything outside returns `None`.
    #[inline]
    pub fn bilinear(&self, u: f64, v: f64) -> Option<f32> {
        // exact at pixel centers
        if u >= 0.0 && v >= 0.0 && u == math::floor(u) && v == math::floor(v) {
            let (x, y) = (u as usize, v as usize);
            return (x < self.width && y < self.height).then(|| self.get(x, y));
        }
        self.bilinear_with_gradient(u, v).map(|(val, _, _)| val as f32)
    }

    /// Bilinear lookup in double precision plus the partial derivatives of
    /// the interpolant with respect to `u` and `v` (one-sided inside each
    /// cell).
    #[inline]
    pub fn bilinear_with_gradient(&self, u: f64, v: f64) -> Option<(f64, f64, f64)> {
        let (w, h) = (self.width, self.height);
        if w == 0 || h == 0 {
            return None;
        }
        if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
            return None;
        }
        let x0 = (math::floor(u) as usize).min(w.saturating_sub(2));
        let y0 = (math::floor(v) as usize).min(h.saturating_sub(2));
        let x1 = (x0 + 1).min(w - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let p00 = self.get(x0, y0) as f64;
        let p10 = self.get(x1, y0) as f64;
        let p01 = self.get(x0, y1) as f64;
        let p11 = self.get(x1, y1) as f64;
        let top = p00 + fx * (p10 - p00);
        let bottom = p01 + fx * (p11 - p01);
        let val = top + fy * (bottom - top);
        let du = (1.0 - fy) * (p10 - p00) + fy * (p11 - p01);
        let dv = bottom - top;
        Some((val, du, dv))
    }

    /// Catmull-Rom bicubic lookup plus its partial derivatives. The
    /// interpolant passes through the samples and is continuously
    /// differentiable; the stencil is edge-replicated. Defined on the same
    /// hull as [`Image::bilinear`].
    #[inline]
    pub fn bicubic_with_gradient(&self, u: f64, v: f64) -> Option<(f64, f64, f64)> {
        let (w, h) = (self.width, self.height);
        if w == 0 || h == 0 {
            return None;
        }
        if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
            return None;
        }
        let x0 = math::floor(u) as isize;
        let y0 = math::floor(v) as isize;
        let (wx, dwx) = catmull_rom(u - x0 as f64);
        let (wy, dwy) = catmull_rom(v - y0 as f64);
        let (mut val, mut du, mut dv) = (0.0, 0.0, 0.0);
        for (j, (&ay, &day)) in wy.iter().zip(&dwy).enumerate() {
            let yy = (y0 + j as isize - 1).clamp(0, h as isize - 1) as usize;
            let row = self.row(yy);
            let (mut r, mut dr) = (0.0, 0.0);
            for (i, (&ax, &dax)) in wx.iter().zip(&dwx).enumerate() {
                let xx = (x0 + i as isize - 1).clamp(0, w as isize - 1) as usize;
                let p = row[xx] as f64;
                r += ax * p;
                dr += dax * p;
            }
            val += ay * r;
            du += ay * dr;
            dv += day * r;
        }
        Some((val, du, dv))
    }

    /// Bilinear lookup that clamps coordinates to the pixel-center hull.
    pub fn bilinear_clamped(&self, u: f64, v: f64) -> f32 {
        let u = u.clamp(0.0, (self.width.max(1) - 1) as f64);
        let v = v.clamp(0.0, (self.height.max(1) - 1) as f64);
        self.bilinear(u, v).unwrap_or(0.0)
    }

    /// Halves the resolution with a 2x2 box filter. Odd trailing rows or
    /// columns are dropped. Non-finite samples are skipped, so invalid depth
    /// only propagates when the whole 2x2 block is invalid.
    pub fn downsample2(&self) -> Self {
        let (w, h) = (self.width / 2, self.height / 2);
        Self::from_fn(w, h, |x, y| {
            let mut sum = 0.0f64;
            let mut n = 0u32;
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                let v = self.get(2 * x + dx, 2 * y + dy);
                if v.is_finite() {
                    sum += v as f64;
                    n += 1;
                }
            }
            if n == 0 {
                f32::NAN
            } else {
                (sum / n as f64) as f32
            }
        })
    }
}

/// Catmull-Rom weights for the samples at offsets `-1, 0, 1, 2` and their
/// derivatives, at fractional position `t`.
#[inline]
fn catmull_rom(t: f64) -> ([f64; 4], [f64; 4]) {
    let (t2, t3) = (t * t, t * t * t);
    (
        [
            0.5 * (-t3 + 2.0 * t2 - t),
            0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
            0.5 * (-3.0 * t3 + 4.0 * t2 + t),
            0.5 * (t3 - t2),
        ],
        [
            0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
            0.5 * (9.0 * t2 - 10.0 * t),
            0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
            0.5 * (3.0 * t2 - 2.0 * t),
        ],
    )
}

/// Pulls coordinates that miss the pixel-center hull by less than `1e-6`
/// px (projection round-off) back onto it.
#[inline]
pub(crate) fn snap_to_hull(u: f64, v: f64, width: usize, height: usize) -> (f64, f64) {
    const SLACK: f64 = 1e-6;
    let snap = |c: f64, hi: f64| {
        if c < 0.0 && c > -SLACK {
            0.0
        } else if c > hi && c < hi + SLACK {
            hi
        } else {
            c
        }
    };
    (snap(u, width as f64 - 1.0), snap(v, height as f64 - 1.0))
}

/// `true` for a usable depth sample.
#[inline]
pub fn depth_is_valid(d: f32) -> bool {
    d.is_finite() && d > 0.0
}
