//! Pinhole camera, rigid motions and the reprojection warp.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

pub use nalgebra::{Point3, Vector3};

/// Quaternions with a smaller norm than this cannot be normalized.
pub const MIN_QUATERNION_NORM: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("point has non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("transformed point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("quaternion norm {0} is too small to normalize")]
    ZeroQuaternion(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cu: f64,
    pub cv: f64,
}

/// Continuous pixel coordinates; integers are pixel centers.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
}

impl Pixel {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cu: f64, cv: f64) -> Result<Self, GeometryError> {
        if !(fx.is_finite() && fy.is_finite() && cu.is_finite() && cv.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("non-finite value"));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics("focal length must be positive"));
        }
        Ok(Self { fx, fy, cu, cv })
    }

    /// Square pixels with a single focal length.
    pub fn with_focal(f: f64, cu: f64, cv: f64) -> Result<Self, GeometryError> {
        Self::new(f, f, cu, cv)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cu, 0.0, self.fy, self.cv, 0.0, 0.0, 1.0)
    }

    /// `K^-1 (u, v, 1)`: the viewing ray scaled to unit depth.
    #[inline]
    pub fn ray(&self, px: Pixel) -> Vector3<f64> {
        Vector3::new((px.u - self.cu) / self.fx, (px.v - self.cv) / self.fy, 1.0)
    }

    #[inline]
    pub fn project(&self, p: &Point3<f64>) -> Result<(Pixel, f64), GeometryError> {
        if !(p.z > 0.0) {
            return Err(GeometryError::NonPositiveDepth(p.z));
        }
        Ok((self.project_unchecked(p), p.z))
    }

    #[inline]
    pub(crate) fn project_unchecked(&self, p: &Point3<f64>) -> Pixel {
        Pixel::new(self.fx * p.x / p.z + self.cu, self.fy * p.y / p.z + self.cv)
    }

    #[inline]
    pub fn backproject(&self, px: Pixel, depth: f64) -> Result<Point3<f64>, GeometryError> {
        if !(depth > 0.0) {
            return Err(GeometryError::NonPositiveDepth(depth));
        }
        Ok(Point3::from(self.ray(px) * depth))
    }

    /// Intrinsics of the image resampled by `factor` with `u' = factor * u`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { fx: self.fx * factor, fy: self.fy * factor, cu: self.cu * factor, cv: self.cv * factor }
    }

    /// Intrinsics for one level of a 2x2 box pyramid (pixel centers move by
    /// half a pixel).
    pub fn half_resolution(&self) -> Self {
        Self { fx: self.fx * 0.5, fy: self.fy * 0.5, cu: (self.cu + 0.5) * 0.5 - 0.5, cv: (self.cv + 0.5) * 0.5 - 0.5 }
    }
}

/// Normalizes `(w, x, y, z)` into a rotation.
pub fn unit_quaternion(w: f64, x: f64, y: f64, z: f64) -> Result<UnitQuaternion<f64>, GeometryError> {
    let q = Quaternion::new(w, x, y, z);
    let n = q.norm();
    if !(n >= MIN_QUATERNION_NORM) {
        return Err(GeometryError::ZeroQuaternion(n));
    }
    // unit input within rounding is kept bit-exact
    if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(UnitQuaternion::new_unchecked(q));
    }
    Ok(UnitQuaternion::new_unchecked(q / n))
}

/// Rotation matrix of a (not necessarily normalized) quaternion.
pub fn quat_to_matrix(w: f64, x: f64, y: f64, z: f64) -> Result<Matrix3<f64>, GeometryError> {
    let q = unit_quaternion(w, x, y, z)?;
    let (w, x, y, z) = (q.w, q.i, q.j, q.k);
    Ok(Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// Rigid transform `p -> R p + t` with the rotation stored as a unit
/// quaternion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidMotion {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidMotion {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidMotion {
    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), t)
    }

    /// From `[tx, ty, tz]` and `[qw, qx, qy, qz]`; the quaternion is
    /// normalized.
    pub fn from_parts(t: [f64; 3], q: [f64; 4]) -> Result<Self, GeometryError> {
        Ok(Self::new(unit_quaternion(q[0], q[1], q[2], q[3])?, Vector3::new(t[0], t[1], t[2])))
    }

    /// Rotation from a rotation vector (axis times angle, radians).
    pub fn from_rotation_vector(rotvec: Vector3<f64>, t: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::from_scaled_axis(rotvec), t)
    }

    /// Euler angles applied in ZYX order: `R = Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn from_euler_zyx(yaw: f64, pitch: f64, roll: f64, t: Vector3<f64>) -> Self {
        let rz = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
        let ry = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pitch);
        let rx = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), roll);
        Self::new(rz * ry * rx, t)
    }

    /// Inverse of [`RigidMotion::from_euler_zyx`]: `(yaw, pitch, roll)`.
    pub fn euler_zyx(&self) -> (f64, f64, f64) {
        let m = self.rotation_matrix();
        let pitch = math::asin((-m[(2, 0)]).clamp(-1.0, 1.0));
        let yaw = math::atan2(m[(1, 0)], m[(0, 0)]);
        let roll = math::atan2(m[(2, 1)], m[(2, 2)]);
        (yaw, pitch, roll)
    }

    /// `[qw, qx, qy, qz]`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        let [w, x, y, z] = self.quaternion_wxyz();
        // the stored quaternion is unit norm
        quat_to_matrix(w, x, y, z).unwrap_or_else(|_| Matrix3::identity())
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation_matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    #[inline]
    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self::new(self.rotation * other.rotation, self.rotation * other.translation + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let r_inv = self.rotation.inverse();
        Self::new(r_inv, -(r_inv * self.translation))
    }

    /// Rotation angle of `self^-1 ∘ other`, in radians.
    pub fn angle_to(&self, other: &Self) -> f64 {
        self.rotation.angle_to(&other.rotation)
    }
}

/// Moves a pixel with depth `d` through `motion`: backproject, transform,
/// project. Returns the pixel and depth in the target camera.
#[inline]
pub fn warp_pixel(
    cam: &Intrinsics,
    motion: &RigidMotion,
    px: Pixel,
    depth: f64,
) -> Result<(Pixel, f64), GeometryError> {
    let p = motion.transform_point(&cam.backproject(px, depth)?);
    if !(p.z > 0.0) {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok((cam.project_unchecked(&p), p.z))
}

/// The 4x4 reprojection matrix `K T K^-1` acting on `(u d, v d, d, 1)`.
///
/// Multiplying it with the scaled homogeneous pixel and dividing the first
/// two components by the third gives the same result as [`warp_pixel`].
pub fn reprojection_matrix(cam: &Intrinsics, motion: &RigidMotion) -> Matrix4<f64> {
    let mut k = Matrix4::identity();
    k.fixed_view_mut::<3, 3>(0, 0).copy_from(&cam.matrix());
    let mut k_inv = Matrix4::identity();
    let ki = Matrix3::new(1.0 / cam.fx, 0.0, -cam.cu / cam.fx, 0.0, 1.0 / cam.fy, -cam.cv / cam.fy, 0.0, 0.0, 1.0);
    k_inv.fixed_view_mut::<3, 3>(0, 0).copy_from(&ki);
    k * motion.to_homogeneous() * k_inv
}

/// Left Jacobian of SO(3) at the rotation vector `phi`:
/// `Exp(phi + δ) ≈ Exp(J_l(phi) δ) Exp(phi)`.
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = phi.cross_matrix();
    if theta2 < 1e-10 {
        return Matrix3::identity() + k * 0.5 + k * k / 6.0;
    }
    let theta = math::sqrt(theta2);
    let a = (1.0 - math::cos(theta)) / theta2;
    let b = (theta - math::sin(theta)) / (theta2 * theta);
    Matrix3::identity() + k * a + k * k * b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cam() -> Intrinsics {
        Intrinsics::with_focal(700.0, 600.0, 180.0).unwrap()
    }

    #[test]
    fn project_examples() {
        let c = cam();
        let (px, d) = c.project(&Point3::new(0.0, 0.0, 10.0)).unwrap();
        assert_eq!((px.u, px.v, d), (600.0, 180.0, 10.0));
        let (px, _) = c.project(&Point3::new(1.0, 0.0, 10.0)).unwrap();
        assert_eq!((px.u, px.v), (670.0, 180.0));
        assert_eq!(c.project(&Point3::new(1.0, 0.0, -1.0)), Err(GeometryError::NonPositiveDepth(-1.0)));
    }

    #[test]
    fn backproject_examples() {
        let c = cam();
        assert_eq!(c.backproject(Pixel::new(600.0, 180.0), 10.0).unwrap(), Point3::new(0.0, 0.0, 10.0));
        let p = c.backproject(Pixel::new(670.0, 180.0), 10.0).unwrap();
        assert_relative_eq!(p, Point3::new(1.0, 0.0, 10.0), epsilon = 1e-12);
        assert!(matches!(c.backproject(Pixel::new(1.0, 1.0), 0.0), Err(GeometryError::NonPositiveDepth(_))));
    }

    #[test]
    fn invalid_intrinsics_rejected() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(1.0, f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn warp_identity_and_forward_motion() {
        let c = cam();
        let px = Pixel::new(123.5, 77.25);
        let (out, d) = warp_pixel(&c, &RigidMotion::identity(), px, 13.0).unwrap();
        assert_relative_eq!(out.u, px.u, epsilon = 1e-12);
        assert_relative_eq!(out.v, px.v, epsilon = 1e-12);
        assert_eq!(d, 13.0);

        // frame-t point at 20 m seen from a camera 5 m further back
        let back = RigidMotion::from_translation(Vector3::new(0.0, 0.0, 5.0));
        let (out, d) = warp_pixel(&c, &back, Pixel::new(600.0, 180.0), 20.0).unwrap();
        assert_relative_eq!(out.u, 600.0, epsilon = 1e-12);
        assert_relative_eq!(out.v, 180.0, epsilon = 1e-12);
        assert_relative_eq!(d, 25.0, epsilon = 1e-12);
    }

    #[test]
    fn warp_behind_camera() {
        // rotating 90 degrees about y puts an on-axis point at x = +z, z = 0;
        // a bit more puts it behind
        let c = cam();
        let rot = RigidMotion::from_rotation_vector(Vector3::new(0.0, 1.7, 0.0), Vector3::zeros());
        let r = warp_pixel(&c, &rot, Pixel::new(600.0, 180.0), 10.0);
        assert!(matches!(r, Err(GeometryError::BehindCamera(z)) if z < 0.0));
    }

    #[test]
    fn reprojection_matrix_matches_warp() {
        let c = cam();
        let m = RigidMotion::from_euler_zyx(0.05, -0.02, 0.01, Vector3::new(0.3, -0.1, 1.2));
        let (u, v, d) = (321.0, 97.0, 17.5);
        let w = reprojection_matrix(&c, &m) * nalgebra::Vector4::new(u * d, v * d, d, 1.0);
        let (px, d2) = warp_pixel(&c, &m, Pixel::new(u, v), d).unwrap();
        assert_relative_eq!(w[0] / w[2], px.u, epsilon = 1e-9);
        assert_relative_eq!(w[1] / w[2], px.v, epsilon = 1e-9);
        assert_relative_eq!(w[2], d2, epsilon = 1e-12);
    }

    #[test]
    fn quaternion_identities() {
        assert_eq!(quat_to_matrix(1.0, 0.0, 0.0, 0.0).unwrap(), Matrix3::identity());
        let a = quat_to_matrix(0.3, -0.2, 0.9, 0.1).unwrap();
        let b = quat_to_matrix(-0.3, 0.2, -0.9, -0.1).unwrap();
        assert_eq!(a, b);
        assert!(matches!(quat_to_matrix(0.0, 0.0, 0.0, 1e-16), Err(GeometryError::ZeroQuaternion(_))));
    }

    #[test]
    fn euler_round_trip() {
        let m = RigidMotion::from_euler_zyx(0.4, -0.3, 0.2, Vector3::zeros());
        let (y, p, r) = m.euler_zyx();
        assert_relative_eq!(y, 0.4, epsilon = 1e-12);
        assert_relative_eq!(p, -0.3, epsilon = 1e-12);
        assert_relative_eq!(r, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn left_jacobian_matches_finite_difference() {
        let phi = Vector3::new(0.3, -0.5, 0.2);
        let j = so3_left_jacobian(&phi);
        let r0 = UnitQuaternion::from_scaled_axis(phi);
        let h = 1e-6;
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = h;
            let rp = UnitQuaternion::from_scaled_axis(phi + d);
            let rm = UnitQuaternion::from_scaled_axis(phi - d);
            let num = ((rp * r0.inverse()).scaled_axis() - (rm * r0.inverse()).scaled_axis()) / (2.0 * h);
            for i in 0..3 {
                assert!((num[i] - j[(i, k)]).abs() < 1e-8);
            }
        }
    }
}
