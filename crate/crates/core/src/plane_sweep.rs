//! Plane-sweep cost volumes over discrete depth levels and their conversion
//! into per-pixel depth distributions.
//!
//! Every frame-`t` pixel is lifted to each candidate depth, moved into the
//! previous frame by the ego-motion and compared against the previous image
//! there. Each patch pixel is warped at the same hypothesized depth, i.e.
//! the comparison is against a fronto-parallel plane hypothesis.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Intrinsics, Pixel, Point3, RigidMotion, Vector3};
use crate::image::{snap_to_hull, DepthMap, Image, ImageBuffer};
use crate::math;
use crate::par::for_each_chunk;

/// Rows per task when filling a volume.
const BLOCK_ROWS: usize = 16;

/// Per-sample variance below which a patch counts as textureless and ZNCC
/// is undefined.
pub const ZNCC_MIN_VARIANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SweepError {
    #[error("images differ in size: {0:?} vs {1:?}")]
    ImageSizeMismatch((usize, usize), (usize, usize)),
    #[error("invalid depth levels: {0}")]
    InvalidLevels(&'static str),
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
}

/// Uniform depth hypotheses `d(w) = w Δd + d_min`, `w ∈ [0, count)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthLevels {
    d_min: f64,
    step: f64,
    count: usize,
}

impl DepthLevels {
    pub fn new(d_min: f64, step: f64, count: usize) -> Result<Self, SweepError> {
        if !(d_min > 0.0 && d_min.is_finite()) {
            return Err(SweepError::InvalidLevels("d_min must be positive"));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(SweepError::InvalidLevels("step must be positive"));
        }
        if count < 2 {
            return Err(SweepError::InvalidLevels("at least two levels are required"));
        }
        Ok(Self { d_min, step, count })
    }

    /// `count` levels with both endpoints included:
    /// `Δd = (d_max - d_min) / (count - 1)`.
    pub fn from_range(d_min: f64, d_max: f64, count: usize) -> Result<Self, SweepError> {
        if count < 2 {
            return Err(SweepError::InvalidLevels("at least two levels are required"));
        }
        if !(d_max > d_min) {
            return Err(SweepError::InvalidLevels("d_max must exceed d_min"));
        }
        Self::new(d_min, (d_max - d_min) / (count - 1) as f64, count)
    }

    #[inline]
    pub fn d_min(&self) -> f64 {
        self.d_min
    }
    #[inline]
    pub fn step(&self) -> f64 {
        self.step
    }
    #[inline]
    pub fn count(&self) -> usize {
        self.count
    }
    pub fn d_max(&self) -> f64 {
        self.depth(self.count - 1)
    }

    #[inline]
    pub fn depth(&self, w: usize) -> f64 {
        w as f64 * self.step + self.d_min
    }

    /// Continuous bin coordinate of `depth`.
    #[inline]
    pub fn bin_of(&self, depth: f64) -> f64 {
        (depth - self.d_min) / self.step
    }

    pub fn contains(&self, depth: f64) -> bool {
        depth >= self.d_min && depth <= self.d_max()
    }

    /// Bin whose center is closest to `depth`, clamped to the range.
    pub fn nearest_bin(&self, depth: f64) -> usize {
        math::round(self.bin_of(depth)).clamp(0.0, (self.count - 1) as f64) as usize
    }
}

/// One lattice point of the frustum: pixel, bin index and its depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrustumSample {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub depth: f64,
}

/// The `(u, v, d)` lattice of a camera frustum.
#[derive(Debug, Clone, Copy)]
pub struct FrustumGrid {
    pub cam: Intrinsics,
    pub width: usize,
    pub height: usize,
    pub levels: DepthLevels,
}

impl FrustumGrid {
    pub fn len(&self) -> usize {
        self.width * self.height * self.levels.count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Samples in pixel-major order (bins innermost).
    pub fn iter(&self) -> impl Iterator<Item = FrustumSample> + '_ {
        let (w, l) = (self.width, self.levels.count());
        (0..self.len()).map(move |i| {
            let bin = i % l;
            let p = i / l;
            FrustumSample { x: p % w, y: p / w, w: bin, depth: self.levels.depth(bin) }
        })
    }

    /// 3D point of a lattice sample in the camera frame.
    pub fn point(&self, s: &FrustumSample) -> Point3<f64> {
        Point3::from(self.cam.ray(Pixel::new(s.x as f64, s.y as f64)) * s.depth)
    }
}

pub fn build_frustum_grid(cam: &Intrinsics, width: usize, height: usize, levels: DepthLevels) -> FrustumGrid {
    FrustumGrid { cam: *cam, width, height, levels }
}

/// Axis-aligned affine pixel map `(u, v) -> (su u + ou, sv v + ov)`.
/// Covers rescaling, cropping and horizontal flips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelAffine {
    pub su: f64,
    pub ou: f64,
    pub sv: f64,
    pub ov: f64,
}

impl PixelAffine {
    pub const IDENTITY: Self = Self { su: 1.0, ou: 0.0, sv: 1.0, ov: 0.0 };

    #[inline]
    pub fn apply(&self, p: Pixel) -> Pixel {
        Pixel::new(self.su * p.u + self.ou, self.sv * p.v + self.ov)
    }

    pub fn inverse(&self) -> Self {
        Self { su: 1.0 / self.su, ou: -self.ou / self.su, sv: 1.0 / self.sv, ov: -self.ov / self.sv }
    }

    /// `self ∘ other`.
    pub fn then_after(&self, other: &Self) -> Self {
        Self {
            su: self.su * other.su,
            ou: self.su * other.ou + self.ou,
            sv: self.sv * other.sv,
            ov: self.sv * other.ov + self.ov,
        }
    }
}

/// Maps a frame-`t` grid pixel at a hypothesized depth to sampling
/// coordinates in the previous image.
///
/// The grid pixel is first taken to canonical pixel coordinates, lifted with
/// the canonical camera, moved by `motion`, projected, and finally mapped
/// into the previous image's (possibly augmented) pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepWarp {
    pub to_canonical: PixelAffine,
    pub cam: Intrinsics,
    pub motion: RigidMotion,
    pub from_canonical: PixelAffine,
}

impl SweepWarp {
    pub fn plain(cam: &Intrinsics, motion: &RigidMotion) -> Self {
        Self { to_canonical: PixelAffine::IDENTITY, cam: *cam, motion: *motion, from_canonical: PixelAffine::IDENTITY }
    }

    /// `R K^-1 (canonical pixel)`; the moved point at depth `d` is
    /// `d * ray + t`.
    #[inline]
    pub fn rotated_ray(&self, x: f64, y: f64) -> Vector3<f64> {
        let c = self.to_canonical.apply(Pixel::new(x, y));
        self.motion.rotation * self.cam.ray(c)
    }

    #[inline]
    pub fn project_ray(&self, ray: &Vector3<f64>, depth: f64) -> Option<Pixel> {
        let p = ray * depth + self.motion.translation;
        if !(p.z > 0.0) {
            return None;
        }
        let px = self.cam.project_unchecked(&Point3::from(p));
        Some(self.from_canonical.apply(px))
    }

    /// Sampling position in the previous image, `None` behind the camera.
    pub fn warp(&self, x: f64, y: f64, depth: f64) -> Option<Pixel> {
        self.project_ray(&self.rotated_ray(x, y), depth)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// `1 - ZNCC`, in `[0, 2]`; textureless patches score 1.
    #[default]
    Zncc,
    /// Mean absolute difference.
    Sad,
    /// Mean squared difference.
    Ssd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub cost: CostKind,
    /// Patch half-size; the patch is `(2r+1)^2` pixels.
    pub patch_radius: usize,
    /// Softmax temperature in cost units.
    pub temperature: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { cost: CostKind::Zncc, patch_radius: 2, temperature: 0.1 }
    }
}

/// Per-pixel, per-bin values on the frame-`t` grid. Invalid entries are NaN.
///
/// Layout is pixel-major: `((y * width + x) * levels + w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrustumVolume {
    width: usize,
    height: usize,
    levels: DepthLevels,
    values: Vec<f32>,
}

impl FrustumVolume {
    pub fn from_values(width: usize, height: usize, levels: DepthLevels, values: Vec<f32>) -> Option<Self> {
        (values.len() == width * height * levels.count()).then_some(Self { width, height, levels, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn levels(&self) -> &DepthLevels {
        &self.levels
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let l = self.levels.count();
        let i = (y * self.width + x) * l;
        &self.values[i..i + l]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, w: usize) -> Option<f32> {
        let v = self.pixel(x, y)[w];
        v.is_finite().then_some(v)
    }

    pub fn is_valid(&self, x: usize, y: usize, w: usize) -> bool {
        self.get(x, y, w).is_some()
    }

    /// Fraction of `(pixel, bin)` entries that are valid.
    pub fn mask_fraction(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|v| v.is_finite()).count() as f64 / self.values.len() as f64
    }

    /// Depth of the lowest-cost bin with optional parabolic sub-bin
    /// refinement; NaN where no bin is valid.
    pub fn winner_take_all(&self, refine: bool) -> DepthMap {
        Image::from_fn(self.width, self.height, |x, y| {
            let c = self.pixel(x, y);
            match lowest(c) {
                Some(best) => {
                    let off = if refine { parabolic_offset(c, best) } else { 0.0 };
                    (self.levels.depth(best) + off * self.levels.step) as f32
                }
                None => f32::NAN,
            }
        })
    }

    /// Softmax of `-cost / temperature` over the valid bins of each pixel,
    /// reusing the volume's storage.
    pub fn into_distribution(mut self, temperature: f64) -> Result<DepthDistribution, SweepError> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(SweepError::InvalidTemperature(temperature));
        }
        let l = self.levels.count();
        let mut valid = vec![false; self.width * self.height];
        for (chunk, ok) in self.values.chunks_mut(l).zip(valid.iter_mut()) {
            *ok = softmax_in_place(chunk, temperature);
        }
        Ok(DepthDistribution { width: self.width, height: self.height, levels: self.levels, probs: self.values, valid })
    }
}

fn lowest(c: &[f32]) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in c.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn highest(c: &[f32]) -> Option<usize> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in c.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Vertex offset of the parabola through bins `i-1, i, i+1`, in
/// `[-0.5, 0.5]`. Zero at the range ends or next to invalid bins.
fn parabolic_offset(c: &[f32], i: usize) -> f64 {
    if i == 0 || i + 1 >= c.len() {
        return 0.0;
    }
    let (a, b, d) = (c[i - 1] as f64, c[i] as f64, c[i + 1] as f64);
    if !(a.is_finite() && d.is_finite()) {
        return 0.0;
    }
    let den = a - 2.0 * b + d;
    if den.abs() < 1e-12 {
        return 0.0;
    }
    (0.5 * (a - d) / den).clamp(-0.5, 0.5)
}

/// Softmax of `-c / t` over finite entries; invalid entries become 0.
/// Returns `false` when no entry is finite (all zeros then).
fn softmax_in_place(c: &mut [f32], temperature: f64) -> bool {
    let Some(best) = lowest(c) else {
        c.iter_mut().for_each(|v| *v = 0.0);
        return false;
    };
    let m = c[best] as f64;
    let mut sum = 0.0f64;
    let mut e = vec![0.0f64; c.len()];
    for (ei, &v) in e.iter_mut().zip(c.iter()) {
        if v.is_finite() {
            *ei = math::exp(-(v as f64 - m) / temperature);
            sum += *ei;
        }
    }
    for (v, ei) in c.iter_mut().zip(e) {
        *v = (ei / sum) as f32;
    }
    true
}

/// Per-pixel categorical distribution over depth bins.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthDistribution {
    width: usize,
    height: usize,
    levels: DepthLevels,
    probs: Vec<f32>,
    valid: Vec<bool>,
}

impl DepthDistribution {
    /// Builds a distribution from raw per-pixel weights (same layout as
    /// [`FrustumVolume`]). Each pixel is normalized; pixels whose weights
    /// are all zero or non-finite are marked invalid.
    pub fn from_weights(width: usize, height: usize, levels: DepthLevels, mut weights: Vec<f32>) -> Option<Self> {
        let l = levels.count();
        if weights.len() != width * height * l {
            return None;
        }
        let mut valid = vec![false; width * height];
        for (c, ok) in weights.chunks_mut(l).zip(valid.iter_mut()) {
            let sum: f64 = c.iter().filter(|v| v.is_finite() && **v > 0.0).map(|&v| v as f64).sum();
            if sum > 0.0 {
                for v in c.iter_mut() {
                    *v = if v.is_finite() && *v > 0.0 { (*v as f64 / sum) as f32 } else { 0.0 };
                }
                *ok = true;
            } else {
                c.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        Some(Self { width, height, levels, probs: weights, valid })
    }

    /// Takes probabilities as stored, without renormalizing. Every entry
    /// must be finite and non-negative; pixels that are all zero are
    /// invalid.
    pub fn from_probabilities(width: usize, height: usize, levels: DepthLevels, probs: Vec<f32>) -> Option<Self> {
        let l = levels.count();
        if probs.len() != width * height * l || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return None;
        }
        let valid = probs.chunks(l).map(|c| c.iter().any(|&p| p > 0.0)).collect();
        Some(Self { width, height, levels, probs, valid })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn levels(&self) -> &DepthLevels {
        &self.levels
    }
    pub fn probabilities(&self) -> &[f32] {
        &self.probs
    }
    pub fn valid_pixels(&self) -> &[bool] {
        &self.valid
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let l = self.levels.count();
        let i = (y * self.width + x) * l;
        &self.probs[i..i + l]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.levels == other.levels
    }

    /// Scalar depth per pixel; NaN for invalid pixels.
    pub fn to_depth(&self, readout: DepthReadout) -> DepthMap {
        distribution_to_depth(self, readout)
    }
}

/// Per-pixel softmax of `-cost / temperature`.
pub fn cost_to_distribution(vol: &FrustumVolume, temperature: f64) -> Result<DepthDistribution, SweepError> {
    vol.clone().into_distribution(temperature)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthReadout {
    /// Most probable bin, optionally refined with a parabola through its
    /// neighbors.
    Argmax { refine: bool },
    /// Probability-weighted mean depth.
    Expectation,
}

impl Default for DepthReadout {
    fn default() -> Self {
        Self::Argmax { refine: true }
    }
}

pub fn distribution_to_depth(dist: &DepthDistribution, readout: DepthReadout) -> DepthMap {
    let levels = dist.levels;
    Image::from_fn(dist.width, dist.height, |x, y| {
        if !dist.is_valid(x, y) {
            return f32::NAN;
        }
        let p = dist.pixel(x, y);
        match readout {
            DepthReadout::Argmax { refine } => {
                let Some(best) = highest(p) else {
                    return f32::NAN;
                };
                let off = if refine { parabolic_offset(p, best) } else { 0.0 };
                (levels.depth(best) + off * levels.step()) as f32
            }
            DepthReadout::Expectation => {
                p.iter().enumerate().map(|(w, &pw)| pw as f64 * levels.depth(w)).sum::<f64>() as f32
            }
        }
    })
}

/// Builds the matching-cost volume between `img_t` and `img_prev` for a
/// plain (unaugmented) image pair.
pub fn compute_cost_volume(
    img_t: &ImageBuffer,
    img_prev: &ImageBuffer,
    cam: &Intrinsics,
    motion: &RigidMotion,
    levels: &DepthLevels,
    cfg: &SweepConfig,
) -> Result<FrustumVolume, SweepError> {
    if !img_t.same_size(img_prev) {
        return Err(SweepError::ImageSizeMismatch(
            (img_t.width(), img_t.height()),
            (img_prev.width(), img_prev.height()),
        ));
    }
    Ok(compute_cost_volume_with(img_t, img_prev, &SweepWarp::plain(cam, motion), levels, cfg))
}

/// Cost volume for an arbitrary [`SweepWarp`]; the two images may differ in
/// size. A bin is valid when the whole patch around the pixel lies inside
/// `img_t` and every warped patch sample is in front of the camera and
/// inside `img_prev`.
pub fn compute_cost_volume_with(
    img_t: &ImageBuffer,
    img_prev: &ImageBuffer,
    warp: &SweepWarp,
    levels: &DepthLevels,
    cfg: &SweepConfig,
) -> FrustumVolume {
    let (w, h) = (img_t.width(), img_t.height());
    let l = levels.count();
    let r = cfg.patch_radius;
    let n = ((2 * r + 1) * (2 * r + 1)) as f64;
    let mut values = vec![f32::NAN; w * h * l];

    let rays: Vec<Vector3<f64>> =
        (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).map(|(x, y)| warp.rotated_ray(x as f64, y as f64)).collect();

    // reference-patch statistics for ZNCC
    let t_stats: Option<(Image<f64>, Image<f64>)> = (cfg.cost == CostKind::Zncc).then(|| {
        let x = img_t.map(|v| v as f64);
        let xx = img_t.map(|v| (v as f64) * (v as f64));
        (box_sum(&x, r), box_sum(&xx, r))
    });

    if w <= 2 * r || h <= 2 * r {
        return FrustumVolume { width: w, height: h, levels: *levels, values };
    }

    for_each_chunk(&mut values, BLOCK_ROWS * w * l, |bi, chunk| {
        let y0 = bi * BLOCK_ROWS;
        let y1 = (y0 + BLOCK_ROWS).min(h);
        let wy0 = y0.saturating_sub(r);
        let wy1 = (y1 + r).min(h);
        let rows = wy1 - wy0;
        let channels = if cfg.cost == CostKind::Zncc { 3 } else { 1 };
        let mut ch = vec![vec![0.0f64; rows * w]; channels];
        let mut hsum = vec![vec![f64::NAN; rows * w]; channels];

        for bin in 0..l {
            let depth = levels.depth(bin);
            for yy in wy0..wy1 {
                for x in 0..w {
                    let i = (yy - wy0) * w + x;
                    let s = warp
                        .project_ray(&rays[yy * w + x], depth)
                        .and_then(|p| {
                            let (u, v) = snap_to_hull(p.u, p.v, img_prev.width(), img_prev.height());
                            img_prev.bilinear(u, v)
                        })
                        .map_or(f64::NAN, |v| v as f64);
                    let a = img_t.get(x, yy) as f64;
                    match cfg.cost {
                        CostKind::Zncc => {
                            ch[0][i] = s;
                            ch[1][i] = s * s;
                            ch[2][i] = a * s;
                        }
                        CostKind::Sad => ch[0][i] = (a - s).abs(),
                        CostKind::Ssd => ch[0][i] = (a - s) * (a - s),
                    }
                }
            }
            for (src, dst) in ch.iter().zip(hsum.iter_mut()) {
                for row in 0..rows {
                    let s = &src[row * w..(row + 1) * w];
                    let d = &mut dst[row * w..(row + 1) * w];
                    for x in r..w - r {
                        d[x] = s[x - r..=x + r].iter().sum();
                    }
                }
            }
            for y in y0.max(r)..y1.min(h - r) {
                for x in r..w - r {
                    let vsum = |c: &Vec<f64>| -> f64 { (y - r..=y + r).map(|yy| c[(yy - wy0) * w + x]).sum() };
                    let cost = match cfg.cost {
                        CostKind::Zncc => {
                            let (sx, sxx) = t_stats.as_ref().map_or((0.0, 0.0), |(a, b)| (a.get(x, y), b.get(x, y)));
                            let sy = vsum(&hsum[0]);
                            let syy = vsum(&hsum[1]);
                            let sxy = vsum(&hsum[2]);
                            zncc_cost(sx, sxx, sy, syy, sxy, n)
                        }
                        CostKind::Sad | CostKind::Ssd => vsum(&hsum[0]) / n,
                    };
                    chunk[((y - y0) * w + x) * l + bin] = cost as f32;
                }
            }
        }
    });

    FrustumVolume { width: w, height: h, levels: *levels, values }
}

#[inline]
fn zncc_cost(sx: f64, sxx: f64, sy: f64, syy: f64, sxy: f64, n: f64) -> f64 {
    if !(sy.is_finite() && syy.is_finite() && sxy.is_finite()) {
        return f64::NAN;
    }
    let var_x = (sxx - sx * sx / n).max(0.0);
    let var_y = (syy - sy * sy / n).max(0.0);
    if var_x < ZNCC_MIN_VARIANCE * n || var_y < ZNCC_MIN_VARIANCE * n {
        return 1.0;
    }
    let zncc = (sxy - sx * sy / n) / math::sqrt(var_x * var_y);
    1.0 - zncc.clamp(-1.0, 1.0)
}

/// Sum over the `(2r+1)^2` window; NaN where the window leaves the image.
fn box_sum(img: &Image<f64>, r: usize) -> Image<f64> {
    let (w, h) = (img.width(), img.height());
    Image::from_fn(w, h, |x, y| {
        if x < r || y < r || x + r >= w || y + r >= h {
            return f64::NAN;
        }
        let mut s = 0.0;
        for yy in y - r..=y + r {
            for xx in x - r..=x + r {
                s += img.get(xx, yy);
            }
        }
        s
    })
}
