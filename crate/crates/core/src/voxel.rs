//! Resampling of frustum-space volumes onto a metric voxel grid and the
//! bird's-eye-view collapse.
//!
//! The grid is axis-aligned with the camera (x right, y down, z forward).
//! A voxel is occupied exactly when its center projects onto the
//! pixel-center hull `[0, W-1] x [0, H-1]` and its depth lies within the
//! depth levels. Values are trilinear in `(u, v, bin)`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Intrinsics;
use crate::math;
use crate::par;
use crate::plane_sweep::{DepthDistribution, DepthLevels, FrustumVolume};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum VoxelError {
    #[error("voxel size must be positive")]
    InvalidVoxelSize,
    #[error("{axis} range is not a whole number of voxels")]
    NonIntegralRange { axis: char },
}

/// Metric extent and cell size. Each range must hold a whole number of
/// cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoxelGridSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    pub voxel_size: f64,
}

impl Default for VoxelGridSpec {
    fn default() -> Self {
        Self { x_range: [-30.0, 30.0], y_range: [-1.0, 3.0], z_range: [2.0, 59.6], voxel_size: 0.2 }
    }
}

impl VoxelGridSpec {
    /// Cell counts `(nx, ny, nz)`.
    pub fn dims(&self) -> Result<(usize, usize, usize), VoxelError> {
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(VoxelError::InvalidVoxelSize);
        }
        let count = |r: [f64; 2], axis: char| {
            let n = (r[1] - r[0]) / self.voxel_size;
            let k = math::round(n);
            if k >= 1.0 && (n - k).abs() <= 1e-9 * k.max(1.0) {
                Ok(k as usize)
            } else {
                Err(VoxelError::NonIntegralRange { axis })
            }
        };
        Ok((count(self.x_range, 'x')?, count(self.y_range, 'y')?, count(self.z_range, 'z')?))
    }

    /// Center of cell `(ix, iy, iz)` in camera coordinates.
    #[inline]
    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        let s = self.voxel_size;
        [
            self.x_range[0] + (ix as f64 + 0.5) * s,
            self.y_range[0] + (iy as f64 + 0.5) * s,
            self.z_range[0] + (iz as f64 + 0.5) * s,
        ]
    }
}

/// A `(u, v, bin)` volume on a pixel grid that can be point-sampled.
pub trait FrustumSource: Sync {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn levels(&self) -> &DepthLevels;
    /// Value at pixel `(x, y)`, bin `w`; `None` when invalid.
    fn sample(&self, x: usize, y: usize, w: usize) -> Option<f32>;
}

impl FrustumSource for FrustumVolume {
    fn width(&self) -> usize {
        FrustumVolume::width(self)
    }
    fn height(&self) -> usize {
        FrustumVolume::height(self)
    }
    fn levels(&self) -> &DepthLevels {
        FrustumVolume::levels(self)
    }
    fn sample(&self, x: usize, y: usize, w: usize) -> Option<f32> {
        self.get(x, y, w)
    }
}

impl FrustumSource for DepthDistribution {
    fn width(&self) -> usize {
        DepthDistribution::width(self)
    }
    fn height(&self) -> usize {
        DepthDistribution::height(self)
    }
    fn levels(&self) -> &DepthLevels {
        DepthDistribution::levels(self)
    }
    fn sample(&self, x: usize, y: usize, w: usize) -> Option<f32> {
        self.is_valid(x, y).then(|| self.pixel(x, y)[w])
    }
}

/// Frustum source defined by a function, for volumes too large to store.
pub struct FnFrustum<F> {
    pub width: usize,
    pub height: usize,
    pub levels: DepthLevels,
    pub f: F,
}

impl<F: Fn(usize, usize, usize) -> Option<f32> + Sync> FrustumSource for FnFrustum<F> {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn levels(&self) -> &DepthLevels {
        &self.levels
    }
    fn sample(&self, x: usize, y: usize, w: usize) -> Option<f32> {
        (self.f)(x, y, w)
    }
}

/// Values and occupancy laid out `[iz][iy][ix]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    spec: VoxelGridSpec,
    dims: (usize, usize, usize),
    values: Vec<f32>,
    occupied: Vec<bool>,
}

impl VoxelGrid {
    pub fn from_parts(spec: VoxelGridSpec, values: Vec<f32>, occupied: Vec<bool>) -> Result<Self, VoxelError> {
        let dims = spec.dims()?;
        let n = dims.0 * dims.1 * dims.2;
        assert!(values.len() == n && occupied.len() == n, "grid buffers must match the spec");
        Ok(Self { spec, dims, values, occupied })
    }

    pub fn spec(&self) -> &VoxelGridSpec {
        &self.spec
    }
    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }
    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims.1 + iy) * self.dims.0 + ix
    }

    /// Value of an occupied voxel.
    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> Option<f32> {
        let i = self.index(ix, iy, iz);
        self.occupied[i].then(|| self.values[i])
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|o| **o).count()
    }
}

/// Resamples `src` at every voxel center. Occupied voxels whose eight
/// interpolation corners are all invalid get value 0.
pub fn sample_voxels<S: FrustumSource + ?Sized>(
    src: &S,
    cam: &Intrinsics,
    spec: &VoxelGridSpec,
) -> Result<VoxelGrid, VoxelError> {
    let (nx, ny, nz) = spec.dims()?;
    let (w, h) = (src.width(), src.height());
    let levels = *src.levels();
    let mut cells: Vec<(f32, bool)> = vec![(0.0, false); nx * ny * nz];
    par::for_each_chunk(&mut cells, nx * ny, |iz, slab| {
        for iy in 0..ny {
            for ix in 0..nx {
                let [x, y, z] = spec.center(ix, iy, iz);
                slab[iy * nx + ix] = project_and_sample(src, cam, &levels, w, h, x, y, z);
            }
        }
    });
    Ok(VoxelGrid {
        spec: *spec,
        dims: (nx, ny, nz),
        values: cells.iter().map(|c| c.0).collect(),
        occupied: cells.iter().map(|c| c.1).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn project_and_sample<S: FrustumSource + ?Sized>(
    src: &S,
    cam: &Intrinsics,
    levels: &DepthLevels,
    w: usize,
    h: usize,
    x: f64,
    y: f64,
    z: f64,
) -> (f32, bool) {
    if w == 0 || h == 0 || !(z >= levels.d_min() && z <= levels.d_max()) {
        return (0.0, false);
    }
    let u = cam.fx * x / z + cam.cu;
    let v = cam.fy * y / z + cam.cv;
    if !(u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64) {
        return (0.0, false);
    }
    let b = levels.bin_of(z).clamp(0.0, (levels.count() - 1) as f64);
    let corner = |c: f64, n: usize| {
        let c0 = (math::floor(c) as usize).min(n - 1);
        (c0, (c0 + 1).min(n - 1), c - c0 as f64)
    };
    let (x0, x1, fx) = corner(u, w);
    let (y0, y1, fy) = corner(v, h);
    let (b0, b1, fb) = corner(b, levels.count());
    let mut acc = 0.0f64;
    let mut weight = 0.0f64;
    for (xx, wx) in [(x0, 1.0 - fx), (x1, fx)] {
        for (yy, wy) in [(y0, 1.0 - fy), (y1, fy)] {
            for (bb, wb) in [(b0, 1.0 - fb), (b1, fb)] {
                let wt = wx * wy * wb;
                if wt == 0.0 {
                    continue;
                }
                if let Some(s) = src.sample(xx, yy, bb) {
                    acc += wt * s as f64;
                    weight += wt;
                }
            }
        }
    }
    let value = if weight > 0.0 { (acc / weight) as f32 } else { 0.0 };
    (value, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BevMode {
    /// Largest occupied value in each column.
    Max,
    /// Mean of the occupied values in each column.
    Mean,
    /// One channel per height slice; unoccupied cells contribute 0.
    Stack,
}

/// Top-down map laid out `[iz][ix][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BevMap {
    pub width: usize,
    pub depth: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl BevMap {
    pub fn get(&self, ix: usize, iz: usize, c: usize) -> f32 {
        self.values[(iz * self.width + ix) * self.channels + c]
    }
}

/// Collapses the height (y) axis. Columns without occupied voxels are 0.
pub fn collapse_bev(grid: &VoxelGrid, mode: BevMode) -> BevMap {
    let (nx, ny, nz) = grid.dims();
    let channels = if mode == BevMode::Stack { ny } else { 1 };
    let mut values = vec![0.0f32; nx * nz * channels];
    for iz in 0..nz {
        for ix in 0..nx {
            let base = (iz * nx + ix) * channels;
            let column = (0..ny).map(|iy| grid.get(ix, iy, iz));
            match mode {
                BevMode::Stack => {
                    for (iy, v) in column.enumerate() {
                        values[base + iy] = v.unwrap_or(0.0);
                    }
                }
                BevMode::Max => {
                    values[base] = column.flatten().reduce(f32::max).unwrap_or(0.0);
                }
                BevMode::Mean => {
                    let (sum, n) = column.flatten().fold((0.0f64, 0usize), |(s, n), v| (s + v as f64, n + 1));
                    values[base] = if n == 0 { 0.0 } else { (sum / n as f64) as f32 };
                }
            }
        }
    }
    BevMap { width: nx, depth: nz, channels, values }
}
