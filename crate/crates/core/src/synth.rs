//! Deterministic ray-cast scenes with exact depth, used as the ground-truth
//! oracle.
//!
//! Textures are functions of world-space surface coordinates, so a point
//! has the same intensity from every viewpoint.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closed_form::Correspondence;
use crate::geometry::{Intrinsics, Pixel, Point3, RigidMotion, Vector3};
use crate::image::{DepthMap, ImageBuffer};
use crate::math;
use crate::par;

/// Primitives must lie in front of the origin within this depth.
pub const MAX_SCENE_DEPTH: f64 = 200.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SynthError {
    #[error("found {found} co-visible points, {requested} requested")]
    InsufficientVisibility { found: usize, requested: usize },
    #[error("invalid scene: {0}")]
    InvalidScene(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Texture {
    Constant {
        value: f64,
    },
    Checker {
        size: f64,
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
    /// Multi-octave value noise on a lattice of `cell` meters.
    Noise {
        cell: f64,
        seed: u64,
        #[serde(default = "one_usize")]
        octaves: usize,
        #[serde(default)]
        low: f64,
        #[serde(default = "one")]
        high: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}

impl Texture {
    /// Intensity at surface coordinates `(s, t)`, clamped to `[0, 1]`.
    pub fn sample(&self, s: f64, t: f64) -> f64 {
        let v = match *self {
            Texture::Constant { value } => value,
            Texture::Checker { size, low, high } => {
                let k = math::floor(s / size) + math::floor(t / size);
                if (k as i64).rem_euclid(2) == 0 {
                    low
                } else {
                    high
                }
            }
            Texture::Noise { cell, seed, octaves, low, high } => {
                let mut acc = 0.0;
                let mut amp = 1.0;
                let mut norm = 0.0;
                let mut freq = 1.0 / cell;
                for o in 0..octaves.max(1) {
                    acc += amp * value_noise(s * freq, t * freq, seed.wrapping_add(o as u64 * 0x9E37));
                    norm += amp;
                    amp *= 0.5;
                    freq *= 2.0;
                }
                low + (high - low) * acc / norm
            }
        };
        v.clamp(0.0, 1.0)
    }

    fn validate(&self) -> Result<(), SynthError> {
        match *self {
            Texture::Checker { size, .. } if !(size > 0.0) => {
                Err(SynthError::InvalidScene("checker size must be positive"))
            }
            Texture::Noise { cell, .. } if !(cell > 0.0) => {
                Err(SynthError::InvalidScene("noise cell must be positive"))
            }
            _ => Ok(()),
        }
    }
}

fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = seed ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    h ^= (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (fx, fy) = (math::floor(x), math::floor(y));
    let (ix, iy) = (fx as i64, fy as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let a = lattice(ix, iy, seed);
    let b = lattice(ix + 1, iy, seed);
    let c = lattice(ix, iy + 1, seed);
    let d = lattice(ix + 1, iy + 1, seed);
    let top = a + tx * (b - a);
    let bottom = c + tx * (d - c);
    top + ty * (bottom - top)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// The plane `z = depth` in world coordinates, optionally limited to
    /// `[x0, x1] x [y0, y1]`. Textured by `(x, y)`.
    FrontoPlane {
        depth: f64,
        #[serde(default)]
        bounds: Option<[f64; 4]>,
        texture: Texture,
    },
    /// Plane through `point` with `normal`, optionally limited to
    /// `|s| <= half_extent[0]`, `|t| <= half_extent[1]` in its own surface
    /// coordinates.
    Plane {
        point: [f64; 3],
        normal: [f64; 3],
        #[serde(default)]
        half_extent: Option<[f64; 2]>,
        texture: Texture,
    },
    /// Axis-aligned box. Each face is textured by its two in-plane world
    /// coordinates.
    Box { min: [f64; 3], max: [f64; 3], texture: Texture },
}

impl Primitive {
    /// Nearest hit along `origin + s dir` with `s > 0`: `(s, texture
    /// intensity)`.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
        const EPS: f64 = 1e-12;
        match self {
            Primitive::FrontoPlane { depth, bounds, texture } => {
                if dir.z.abs() < EPS {
                    return None;
                }
                let s = (depth - origin.z) / dir.z;
                if !(s > EPS) {
                    return None;
                }
                let p = origin + dir * s;
                if let Some([x0, x1, y0, y1]) = bounds {
                    if p.x < *x0 || p.x > *x1 || p.y < *y0 || p.y > *y1 {
                        return None;
                    }
                }
                Some((s, texture.sample(p.x, p.y)))
            }
            Primitive::Plane { point, normal, half_extent, texture } => {
                let n = Vector3::from(*normal).normalize();
                let denom = n.dot(dir);
                if denom.abs() < EPS {
                    return None;
                }
                let p0 = Vector3::from(*point);
                let s = n.dot(&(p0 - origin)) / denom;
                if !(s > EPS) {
                    return None;
                }
                let rel = origin + dir * s - p0;
                let (e1, e2) = plane_basis(&n);
                let (a, b) = (rel.dot(&e1), rel.dot(&e2));
                if let Some([ha, hb]) = half_extent {
                    if a.abs() > *ha || b.abs() > *hb {
                        return None;
                    }
                }
                Some((s, texture.sample(a, b)))
            }
            Primitive::Box { min, max, texture } => {
                let mut t_near = f64::NEG_INFINITY;
                let mut t_far = f64::INFINITY;
                let mut axis = 0;
                for k in 0..3 {
                    if dir[k].abs() < EPS {
                        if origin[k] < min[k] || origin[k] > max[k] {
                            return None;
                        }
                        continue;
                    }
                    let a = (min[k] - origin[k]) / dir[k];
                    let b = (max[k] - origin[k]) / dir[k];
                    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                    if lo > t_near {
                        t_near = lo;
                        axis = k;
                    }
                    t_far = t_far.min(hi);
                }
                if t_near > t_far || !(t_near > EPS) {
                    return None;
                }
                let p = origin + dir * t_near;
                let (s, t) = match axis {
                    0 => (p.z, p.y),
                    1 => (p.x, p.z),
                    _ => (p.x, p.y),
                };
                Some((t_near, texture.sample(s, t)))
            }
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let in_range = |z: f64| z > 0.0 && z <= MAX_SCENE_DEPTH;
        match self {
            Primitive::FrontoPlane { depth, texture, .. } => {
                if !in_range(*depth) {
                    return Err(SynthError::InvalidScene("plane depth outside (0, 200] m"));
                }
                texture.validate()
            }
            Primitive::Plane { point, normal, texture, .. } => {
                if Vector3::from(*normal).norm() < 1e-12 {
                    return Err(SynthError::InvalidScene("plane normal is zero"));
                }
                if !in_range(point[2]) {
                    return Err(SynthError::InvalidScene("plane anchor outside (0, 200] m"));
                }
                texture.validate()
            }
            Primitive::Box { min, max, texture } => {
                if (0..3).any(|k| !(min[k] < max[k])) {
                    return Err(SynthError::InvalidScene("box min must be below max"));
                }
                if !(in_range(min[2]) && in_range(max[2])) {
                    return Err(SynthError::InvalidScene("box outside (0, 200] m"));
                }
                texture.validate()
            }
        }
    }
}

/// Orthonormal in-plane axes for a unit normal.
fn plane_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (helper - n * n.dot(&helper)).normalize();
    (e1, n.cross(&e1))
}

/// Textured primitives; rays that miss everything get `background`
/// intensity and invalid (NaN) depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Scene {
    #[serde(default)]
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub background: f64,
    /// Average intensity over a 2x2 sub-pixel grid. Depth always comes from
    /// the pixel center.
    #[serde(default)]
    pub supersample: bool,
}

impl Scene {
    pub fn validate(&self) -> Result<(), SynthError> {
        self.primitives.iter().try_for_each(Primitive::validate)
    }

    /// Nearest hit along a world-space ray: `(ray parameter, intensity)`.
    fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, f64)> {
        self.primitives.iter().filter_map(|p| p.intersect(origin, dir)).min_by(|a, b| a.0.total_cmp(&b.0))
    }

    /// Camera-frame depth and intensity seen through pixel `px` of a camera
    /// with world-to-camera `pose`.
    pub fn trace(&self, cam: &Intrinsics, pose: &RigidMotion, px: Pixel) -> Option<(f64, f64)> {
        let inv = pose.inverse();
        // camera-frame ray has unit z, so the ray parameter is the depth
        let dir = inv.rotation * cam.ray(px);
        self.cast(&inv.translation, &dir)
    }
}

/// Renders intensity and depth at pixel centers for a camera with
/// world-to-camera `pose`.
pub fn render(
    scene: &Scene,
    cam: &Intrinsics,
    width: usize,
    height: usize,
    pose: &RigidMotion,
) -> (ImageBuffer, DepthMap) {
    let mut px: Vec<(f32, f32)> = alloc::vec![(0.0, f32::NAN); width * height];
    let inv = pose.inverse();
    let origin = inv.translation;
    par::for_each_chunk(&mut px, width.max(1), |y, row| {
        for (x, out) in row.iter_mut().enumerate() {
            let center = Pixel::new(x as f64, y as f64);
            let hit = scene.cast(&origin, &(inv.rotation * cam.ray(center)));
            let depth = hit.map_or(f32::NAN, |h| h.0 as f32);
            let intensity = if scene.supersample {
                let mut sum = 0.0;
                for (du, dv) in [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)] {
                    let p = Pixel::new(center.u + du, center.v + dv);
                    sum += scene.cast(&origin, &(inv.rotation * cam.ray(p))).map_or(scene.background, |h| h.1);
                }
                sum / 4.0
            } else {
                hit.map_or(scene.background, |h| h.1)
            };
            *out = (intensity.clamp(0.0, 1.0) as f32, depth);
        }
    });
    let img =
        ImageBuffer::from_vec(width, height, px.iter().map(|p| p.0).collect()).expect("sized from the render target");
    let depth =
        DepthMap::from_vec(width, height, px.iter().map(|p| p.1).collect()).expect("sized from the render target");
    (img, depth)
}

/// Motion taking camera-`a` coordinates into camera-`b` coordinates for
/// world-to-camera poses.
pub fn relative_motion(pose_a: &RigidMotion, pose_b: &RigidMotion) -> RigidMotion {
    pose_b.compose(&pose_a.inverse())
}

/// A surface point seen in both views, with exact sub-pixel projections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledCorrespondence {
    pub corr: Correspondence,
    pub depth_a: f64,
    pub depth_b: f64,
    pub world: [f64; 3],
}

/// Draws `n` surface points visible in both views. Points come from random
/// continuous pixel positions in view `a`; a point is kept when it projects
/// inside view `b` and is not occluded there.
#[allow(clippy::too_many_arguments)]
pub fn sample_correspondences(
    scene: &Scene,
    cam: &Intrinsics,
    width: usize,
    height: usize,
    pose_a: &RigidMotion,
    pose_b: &RigidMotion,
    n: usize,
    seed: u64,
) -> Result<Vec<SampledCorrespondence>, SynthError> {
    if n == 0 {
        return Err(SynthError::InvalidScene("at least one correspondence is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wmax, hmax) = (width.saturating_sub(1) as f64, height.saturating_sub(1) as f64);
    let inv_a = pose_a.inverse();
    let mut out = Vec::with_capacity(n);
    for _ in 0..10 * n {
        if out.len() == n {
            break;
        }
        let pa = Pixel::new(rng.random::<f64>() * wmax, rng.random::<f64>() * hmax);
        let Some((depth_a, _)) = scene.trace(cam, pose_a, pa) else {
            continue;
        };
        let world = inv_a.transform_point(&Point3::from(cam.ray(pa) * depth_a));
        let in_b = pose_b.transform_point(&world);
        let Ok((pb, depth_b)) = cam.project(&in_b) else {
            continue;
        };
        if !(pb.u >= 0.0 && pb.u <= wmax && pb.v >= 0.0 && pb.v <= hmax) {
            continue;
        }
        match scene.trace(cam, pose_b, pb) {
            Some((d, _)) if (d - depth_b).abs() <= 1e-6 * depth_b => {}
            _ => continue,
        }
        out.push(SampledCorrespondence {
            corr: Correspondence { u1: pa.u, v1: pa.v, u2: pb.u, v2: pb.v },
            depth_a,
            depth_b,
            world: [world.x, world.y, world.z],
        });
    }
    if out.len() < n {
        return Err(SynthError::InsufficientVisibility { found: out.len(), requested: n });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{general_two_view_depth, ClosedFormConfig};

    fn cam() -> Intrinsics {
        Intrinsics::with_focal(700.0, 80.0, 40.0).unwrap()
    }

    fn wall(depth: f64) -> Scene {
        Scene {
            primitives: alloc::vec![Primitive::FrontoPlane {
                depth,
                bounds: None,
                texture: Texture::Noise { cell: 0.3, seed: 7, octaves: 3, low: 0.1, high: 0.9 },
            }],
            ..Default::default()
        }
    }

    #[test]
    fn empty_scene_has_no_depth() {
        let (img, depth) = render(&Scene::default(), &cam(), 16, 8, &RigidMotion::identity());
        assert!(depth.as_slice().iter().all(|d| d.is_nan()));
        assert!(img.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fronto_wall_is_constant_depth() {
        let (_, depth) = render(&wall(20.0), &cam(), 160, 80, &RigidMotion::identity());
        assert!(depth.as_slice().iter().all(|&d| d == 20.0));
    }

    #[test]
    fn renders_are_deterministic() {
        let mut s = wall(12.0);
        s.supersample = true;
        let pose = RigidMotion::from_euler_zyx(0.02, 0.01, 0.0, Vector3::new(0.1, 0.0, 0.3));
        assert_eq!(render(&s, &cam(), 64, 32, &pose), render(&s, &cam(), 64, 32, &pose));
    }

    #[test]
    fn box_depth_is_front_face() {
        let s = Scene {
            primitives: alloc::vec![Primitive::Box {
                min: [-1.0, -1.0, 10.0],
                max: [1.0, 1.0, 12.0],
                texture: Texture::Constant { value: 0.5 },
            }],
            ..Default::default()
        };
        let (img, depth) = render(&s, &cam(), 160, 80, &RigidMotion::identity());
        assert_eq!(depth.get(80, 40), 10.0);
        assert_eq!(img.get(80, 40), 0.5);
        assert!(depth.get(0, 0).is_nan());
    }

    #[test]
    fn identical_poses_give_identical_pixels() {
        let pose = RigidMotion::from_translation(Vector3::new(0.0, 0.0, 1.0));
        let c = sample_correspondences(&wall(20.0), &cam(), 160, 80, &pose, &pose, 50, 1).unwrap();
        for s in c {
            assert!((s.corr.u1 - s.corr.u2).abs() < 1e-9 && (s.corr.v1 - s.corr.v2).abs() < 1e-9);
        }
    }

    #[test]
    fn lateral_baseline_disparity() {
        // camera b sits 0.54 m to the right: world-to-camera shifts x by -0.54
        let b = RigidMotion::from_translation(Vector3::new(-0.54, 0.0, 0.0));
        let c = sample_correspondences(&wall(5.4), &cam(), 160, 80, &RigidMotion::identity(), &b, 50, 2).unwrap();
        for s in c {
            assert!((s.corr.u1 - s.corr.u2 - 70.0).abs() < 1e-9);
        }
    }

    #[test]
    fn correspondences_satisfy_closed_form() {
        let a = RigidMotion::from_euler_zyx(0.01, -0.02, 0.005, Vector3::new(0.1, -0.05, 0.0));
        let b = RigidMotion::from_euler_zyx(-0.03, 0.01, 0.0, Vector3::new(-0.4, 0.02, -1.5));
        let rel = relative_motion(&a, &b);
        let c = sample_correspondences(&wall(15.0), &cam(), 160, 80, &a, &b, 100, 3).unwrap();
        for s in c {
            let sol = general_two_view_depth(&cam(), &rel, &s.corr, &ClosedFormConfig::default()).unwrap();
            assert!((sol.depth1() - s.depth_a).abs() < 1e-6 * s.depth_a);
            assert!((sol.depth2() - s.depth_b).abs() < 1e-6 * s.depth_b);
        }
    }

    #[test]
    fn occluded_view_is_insufficient() {
        let behind = RigidMotion::from_rotation_vector(Vector3::new(0.0, core::f64::consts::PI, 0.0), Vector3::zeros());
        let r = sample_correspondences(&wall(10.0), &cam(), 160, 80, &RigidMotion::identity(), &behind, 5, 4);
        assert_eq!(r, Err(SynthError::InsufficientVisibility { found: 0, requested: 5 }));
    }

    #[test]
    fn validation() {
        assert!(wall(20.0).validate().is_ok());
        assert!(wall(250.0).validate().is_err());
        let s = Scene {
            primitives: alloc::vec![Primitive::Box {
                min: [0.0, 0.0, 5.0],
                max: [0.0, 1.0, 6.0],
                texture: Texture::Constant { value: 0.5 },
            }],
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }
}
