//! Geometric image augmentation (rescale, crop, horizontal flip) and the
//! canonical-space warp that keeps plane-sweep volumes valid under it.
//!
//! Augmentations compose in the fixed order rescale → crop → flip. With
//! pixel centers at integer coordinates, a canonical pixel `(u, v)` lands at
//!
//! ```text
//! scaled:  (s u, s v)
//! cropped: (s u - x0, s v - y0)
//! flipped: (w_crop - 1 - (s u - x0), s v - y0)
//! ```
//!
//! Rescale and crop are absorbed into the intrinsics. A flipped image has no
//! right-handed pinhole camera, so the flip is undone on the pixel grid
//! before lifting into canonical 3D space and replayed after projection.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Intrinsics, Pixel, RigidMotion};
use crate::image::{Image, ImageBuffer};
use crate::math;
use crate::plane_sweep::{compute_cost_volume_with, DepthLevels, FrustumVolume, PixelAffine, SweepConfig, SweepWarp};

pub const MIN_SCALE: f64 = 0.5;
pub const MAX_SCALE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AugmentError {
    #[error("scale {0} outside [0.5, 2.0]")]
    ScaleOutOfRange(f64),
    #[error("crop {crop:?} exceeds the rescaled image {scaled:?}")]
    CropOutOfBounds { crop: CropRect, scaled: (usize, usize) },
}

/// Crop window in rescaled-image pixels. Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl From<[usize; 4]> for CropRect {
    fn from([x, y, width, height]: [usize; 4]) -> Self {
        Self { x, y, width, height }
    }
}

impl From<CropRect> for [usize; 4] {
    fn from(c: CropRect) -> Self {
        [c.x, c.y, c.width, c.height]
    }
}

/// Record of the geometric augmentation applied to one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    pub flip: bool,
    pub scale: f64,
    pub crop: CropRect,
}

impl AugmentationSpec {
    /// No-op augmentation for a `width x height` image.
    pub fn identity(width: usize, height: usize) -> Self {
        Self { flip: false, scale: 1.0, crop: CropRect { x: 0, y: 0, width, height } }
    }

    /// Rescale only, keeping the whole rescaled image.
    pub fn rescale(width: usize, height: usize, scale: f64) -> Self {
        let (w, h) = scaled_size(width, height, scale);
        Self { flip: false, scale, crop: CropRect { x: 0, y: 0, width: w, height: h } }
    }

    pub fn with_flip(mut self, flip: bool) -> Self {
        self.flip = flip;
        self
    }

    pub fn validate(&self, src_width: usize, src_height: usize) -> Result<(), AugmentError> {
        if !(self.scale >= MIN_SCALE && self.scale <= MAX_SCALE) {
            return Err(AugmentError::ScaleOutOfRange(self.scale));
        }
        let scaled = scaled_size(src_width, src_height, self.scale);
        let c = self.crop;
        if c.width == 0 || c.height == 0 || c.x + c.width > scaled.0 || c.y + c.height > scaled.1 {
            return Err(AugmentError::CropOutOfBounds { crop: c, scaled });
        }
        Ok(())
    }

    /// Canonical pixel → augmented pixel.
    pub fn canonical_to_augmented(&self) -> PixelAffine {
        let s = self.scale;
        let (x0, y0) = (self.crop.x as f64, self.crop.y as f64);
        if self.flip {
            PixelAffine { su: -s, ou: (self.crop.width as f64 - 1.0) + x0, sv: s, ov: -y0 }
        } else {
            PixelAffine { su: s, ou: -x0, sv: s, ov: -y0 }
        }
    }

    /// Augmented pixel → canonical pixel.
    pub fn augmented_to_canonical(&self) -> PixelAffine {
        self.canonical_to_augmented().inverse()
    }

    /// Augmented pixel → pixel of the rescaled and cropped (but unflipped)
    /// image, i.e. the pixel the augmented intrinsics describe.
    pub fn unflip(&self, p: Pixel) -> Pixel {
        if self.flip {
            Pixel::new(self.crop.width as f64 - 1.0 - p.u, p.v)
        } else {
            p
        }
    }
}

/// Size of an image rescaled by `scale` (rounded to whole pixels).
pub fn scaled_size(width: usize, height: usize, scale: f64) -> (usize, usize) {
    (math::round(width as f64 * scale) as usize, math::round(height as f64 * scale) as usize)
}

/// Intrinsics after rescale and crop. Flips leave them unchanged.
pub fn augment_intrinsics(cam: &Intrinsics, aug: &AugmentationSpec) -> Intrinsics {
    let s = cam.scaled(aug.scale);
    Intrinsics { cu: s.cu - aug.crop.x as f64, cv: s.cv - aug.crop.y as f64, ..s }
}

/// Bilinear rescale, then crop, then optional flip. Output size is the crop
/// size. Rescaled pixels that fall just outside the source hull are clamped
/// to the border.
pub fn apply_augmentation(img: &ImageBuffer, aug: &AugmentationSpec) -> Result<ImageBuffer, AugmentError> {
    aug.validate(img.width(), img.height())?;
    let back = aug.augmented_to_canonical();
    Ok(Image::from_fn(aug.crop.width, aug.crop.height, |x, y| {
        let p = back.apply(Pixel::new(x as f64, y as f64));
        img.bilinear_clamped(p.u, p.v)
    }))
}

/// The plane-sweep warp between two augmented frames: augmented frame-`t`
/// grid → canonical pixel → lift with `cam` → `motion` → project with `cam`
/// → replay `aug_prev`.
pub fn canonical_warp(
    aug_t: &AugmentationSpec,
    aug_prev: &AugmentationSpec,
    cam: &Intrinsics,
    motion: &RigidMotion,
) -> SweepWarp {
    SweepWarp {
        to_canonical: aug_t.augmented_to_canonical(),
        cam: *cam,
        motion: *motion,
        from_canonical: aug_prev.canonical_to_augmented(),
    }
}

/// Materialized warp lattice: for every augmented frame-`t` pixel and depth
/// bin, the sampling position in the augmented previous image (or `None`
/// behind the camera). Pixel-major with bins innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpLattice {
    pub width: usize,
    pub height: usize,
    pub levels: DepthLevels,
    pub samples: Vec<Option<Pixel>>,
}

impl WarpLattice {
    pub fn get(&self, x: usize, y: usize, w: usize) -> Option<Pixel> {
        self.samples[(y * self.width + x) * self.levels.count() + w]
    }
}

pub fn canonical_warp_grid(
    aug_t: &AugmentationSpec,
    aug_prev: &AugmentationSpec,
    cam: &Intrinsics,
    motion: &RigidMotion,
    levels: &DepthLevels,
) -> WarpLattice {
    let warp = canonical_warp(aug_t, aug_prev, cam, motion);
    let (width, height) = (aug_t.crop.width, aug_t.crop.height);
    let mut samples = Vec::with_capacity(width * height * levels.count());
    for y in 0..height {
        for x in 0..width {
            let ray = warp.rotated_ray(x as f64, y as f64);
            for w in 0..levels.count() {
                samples.push(warp.project_ray(&ray, levels.depth(w)));
            }
        }
    }
    WarpLattice { width, height, levels: *levels, samples }
}

/// Cost volume between two augmented images, warped through canonical
/// space. The result lives on the augmented frame-`t` grid.
#[allow(clippy::too_many_arguments)]
pub fn augmented_cost_volume(
    img_t: &ImageBuffer,
    img_prev: &ImageBuffer,
    aug_t: &AugmentationSpec,
    aug_prev: &AugmentationSpec,
    cam: &Intrinsics,
    motion: &RigidMotion,
    levels: &DepthLevels,
    cfg: &SweepConfig,
) -> FrustumVolume {
    compute_cost_volume_with(img_t, img_prev, &canonical_warp(aug_t, aug_prev, cam, motion), levels, cfg)
}
