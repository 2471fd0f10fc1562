//! Rigid poses, the pinhole camera and two-view triangulation.
//!
//! Conventions:
//! - [`Pose`] maps world coordinates into the camera frame (`x_cam = R * x_world + t`).
//!   Camera-in-world poses, as written to trajectory files, are obtained with [`Pose::inverse`].
//! - Rotations are unit quaternions stored scalar-last (`[x, y, z, w]`), which is also
//!   nalgebra's internal layout.
//! - Camera frame: x right, y down, z forward.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Quaternion, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Minimum angle between the two viewing rays accepted by [`triangulate`].
pub const MIN_TRIANGULATION_PARALLAX: f64 = 1e-3;

/// Rigid transform from world to camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T: Real> {
    pub rotation: UnitQuaternion<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Default for Pose<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    /// Builds a pose from a rotation matrix; the matrix is re-orthonormalized through
    /// the quaternion conversion.
    pub fn from_rotation_matrix(r: &Matrix3<T>, translation: Vector3<T>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*r);
        Self::new(UnitQuaternion::from_rotation_matrix(&rot), translation)
    }

    /// Pose of a camera whose center sits at `center` (world) with world-to-camera rotation `rotation`.
    pub fn from_center(rotation: UnitQuaternion<T>, center: Vector3<T>) -> Self {
        let translation = -(rotation * center);
        Self::new(rotation, translation)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose<T>) -> Pose<T> {
        let q = self.rotation.quaternion() * other.rotation.quaternion();
        Pose {
            rotation: UnitQuaternion::new_normalize(q),
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose<T> {
        let inv = UnitQuaternion::new_normalize(self.rotation.conjugate().into_inner());
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    /// Position of the optical center in world coordinates.
    pub fn center(&self) -> Vector3<T> {
        -(self.rotation.inverse() * self.translation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `[R | t]`.
    pub fn matrix3x4(&self) -> Matrix3x4<T> {
        let r = self.rotation_matrix();
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Homogeneous 4×4 form `[R t; 0 1]`.
    pub fn matrix4(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 4>(0, 0).copy_from(&self.matrix3x4());
        m
    }

    /// Rotation angle (rad) and translation distance separating two poses.
    pub fn distance(&self, other: &Pose<T>) -> (T, T) {
        let angle = self.rotation.angle_to(&other.rotation);
        (angle, (self.translation - other.translation).norm())
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.coords.iter().all(|v| v.is_finite())
            && self.translation.iter().all(|v| v.is_finite())
    }

    /// Left-multiplicative update: `R ← exp(ω) R`, `t ← exp(ω) t + v` for `delta = (ω, v)`.
    pub fn retract(&self, omega: &Vector3<T>, v: &Vector3<T>) -> Pose<T> {
        let dq = UnitQuaternion::from_scaled_axis(*omega);
        Pose {
            rotation: UnitQuaternion::new_normalize(dq.quaternion() * self.rotation.quaternion()),
            translation: dq * self.translation + v,
        }
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        let c = self.rotation.coords;
        Pose {
            rotation: UnitQuaternion::new_normalize(Quaternion::new(
                U::lit(c[3].as_f64()),
                U::lit(c[0].as_f64()),
                U::lit(c[1].as_f64()),
                U::lit(c[2].as_f64()),
            )),
            translation: self.translation.map(|x| U::lit(x.as_f64())),
        }
    }
}

/// Applies only the rotational part of a pose to a direction vector.
pub fn rotate_bearing<T: Real>(q: &UnitQuaternion<T>, v: &Vector3<T>) -> Vector3<T> {
    q * v
}

/// Pinhole intrinsics with radial-tangential distortion `(k1, k2, p1, p2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub dist: [T; 4],
    pub width: usize,
    pub height: usize,
}

impl<T: Real> CameraModel<T> {
    pub fn new(
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        dist: [T; 4],
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            dist,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Undistorted pinhole camera.
    pub fn pinhole(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self> {
        Self::new(fx, fy, cx, cy, [T::zero(); 4], width, height)
    }

    pub fn validate(&self) -> Result<()> {
        let w = T::lit(self.width as f64);
        let h = T::lit(self.height as f64);
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidCalibration(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCalibration("zero image size".into()));
        }
        if !(self.cx >= T::zero() && self.cx < w && self.cy >= T::zero() && self.cy < h) {
            return Err(Error::InvalidCalibration(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        if !self.dist.iter().all(|d| d.is_finite()) {
            return Err(Error::InvalidCalibration("non-finite distortion".into()));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        self.dist.iter().any(|d| *d != T::zero())
    }

    /// Same intrinsics with distortion removed, i.e. the model of undistorted pixels.
    pub fn without_distortion(&self) -> Self {
        Self {
            dist: [T::zero(); 4],
            ..*self
        }
    }

    pub fn contains(&self, px: &Vector2<T>) -> bool {
        px.x >= T::zero()
            && px.y >= T::zero()
            && px.x < T::lit(self.width as f64)
            && px.y < T::lit(self.height as f64)
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<T> {
        Matrix3::new(
            self.fx,
            T::zero(),
            self.cx,
            T::zero(),
            self.fy,
            self.cy,
            T::zero(),
            T::zero(),
            T::one(),
        )
    }

    /// Projects a camera-frame point to an (undistorted) pixel.
    pub fn project_camera(&self, p: &Vector3<T>) -> Result<Vector2<T>> {
        if !(p.z > T::zero()) {
            return Err(Error::BehindCamera { depth: p.z.as_f64() });
        }
        Ok(Vector2::new(
            self.fx * p.x / p.z + self.cx,
            self.fy * p.y / p.z + self.cy,
        ))
    }

    /// Projects a world point through `pose`; distortion is not applied.
    pub fn project(&self, pose: &Pose<T>, point: &Vector3<T>) -> Result<Vector2<T>> {
        self.project_camera(&pose.transform_point(point))
    }

    /// Normalized image coordinates `((u - cx)/fx, (v - cy)/fy)` of an undistorted pixel.
    pub fn normalize(&self, px: &Vector2<T>) -> Vector2<T> {
        Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    pub fn denormalize(&self, n: &Vector2<T>) -> Vector2<T> {
        Vector2::new(n.x * self.fx + self.cx, n.y * self.fy + self.cy)
    }

    /// Unit bearing vector through an undistorted pixel.
    pub fn bearing(&self, px: &Vector2<T>) -> Vector3<T> {
        let n = self.normalize(px);
        Vector3::new(n.x, n.y, T::one()).normalize()
    }

    fn distort_normalized(&self, n: &Vector2<T>) -> Vector2<T> {
        let [k1, k2, p1, p2] = self.dist;
        let two = T::lit(2.0);
        let (x, y) = (n.x, n.y);
        let r2 = x * x + y * y;
        let radial = T::one() + k1 * r2 + k2 * r2 * r2;
        Vector2::new(
            x * radial + two * p1 * x * y + p2 * (r2 + two * x * x),
            y * radial + p1 * (r2 + two * y * y) + two * p2 * x * y,
        )
    }

    /// Applies the lens distortion to an undistorted pixel.
    pub fn distort_pixel(&self, px: &Vector2<T>) -> Vector2<T> {
        self.denormalize(&self.distort_normalized(&self.normalize(px)))
    }

    /// Inverts the distortion iteratively (at most 20 Newton steps, converged at 1e-8 px).
    pub fn undistort_pixel(&self, raw: &Vector2<T>) -> Result<Vector2<T>> {
        if !self.contains(raw) {
            return Err(Error::Precondition(format!(
                "pixel ({}, {}) outside the image",
                raw.x, raw.y
            )));
        }
        if !self.has_distortion() {
            return Ok(*raw);
        }
        let [k1, k2, p1, p2] = self.dist;
        let two = T::lit(2.0);
        let six = T::lit(6.0);
        let tol = T::lit(1e-8);
        let target = self.normalize(raw);
        let mut n = target;
        let mut residual = T::zero();
        for _ in 0..=20 {
            let d = self.distort_normalized(&n);
            let px = self.denormalize(&n);
            residual = (self.denormalize(&d) - raw).norm();
            if residual < tol {
                return Ok(px);
            }
            let (x, y) = (n.x, n.y);
            let r2 = x * x + y * y;
            let radial = T::one() + k1 * r2 + k2 * r2 * r2;
            let drad = (k1 + two * k2 * r2) * two;
            let j = nalgebra::Matrix2::new(
                radial + x * x * drad + two * p1 * y + six * p2 * x,
                x * y * drad + two * p1 * x + two * p2 * y,
                x * y * drad + two * p1 * x + two * p2 * y,
                radial + y * y * drad + six * p1 * y + two * p2 * x,
            );
            let step = j
                .try_inverse()
                .ok_or(Error::NonConvergence {
                    residual: residual.as_f64(),
                })?
                * (d - target);
            n -= step;
            if !(n.x.is_finite() && n.y.is_finite()) {
                break;
            }
        }
        Err(Error::NonConvergence {
            residual: residual.as_f64(),
        })
    }
}

/// Activity flag of a map point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LandmarkStatus {
    Active,
    Culled,
}

/// A triangulated map point with its keyframe observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Landmark<T: Real> {
    pub id: u64,
    pub position: Vector3<T>,
    /// Keyframe id → undistorted pixel observation.
    pub observations: BTreeMap<u64, Vector2<T>>,
    pub status: LandmarkStatus,
}

impl<T: Real> Landmark<T> {
    pub fn new(id: u64, position: Vector3<T>) -> Self {
        Self {
            id,
            position,
            observations: BTreeMap::new(),
            status: LandmarkStatus::Active,
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == LandmarkStatus::Active
    }
}

/// Angle between the two viewing rays of a correspondence, measured in the world frame.
pub fn parallax_angle<T: Real>(
    pose_a: &Pose<T>,
    pose_b: &Pose<T>,
    bearing_a: &Vector3<T>,
    bearing_b: &Vector3<T>,
) -> T {
    let ra = pose_a.rotation.inverse() * bearing_a;
    let rb = pose_b.rotation.inverse() * bearing_b;
    ra.cross(&rb).norm().atan2(ra.dot(&rb))
}

/// Linear (DLT) triangulation of one point from two views.
///
/// Observations are undistorted pixels. Fails when the rays are nearly parallel or the
/// solution lies behind either camera.
pub fn triangulate<T: Real>(
    pose_a: &Pose<T>,
    pose_b: &Pose<T>,
    cam: &CameraModel<T>,
    obs_a: &Vector2<T>,
    obs_b: &Vector2<T>,
) -> Result<Vector3<T>> {
    let na = cam.normalize(obs_a);
    let nb = cam.normalize(obs_b);
    triangulate_normalized(pose_a, pose_b, &na, &nb)
}

/// [`triangulate`] on normalized image coordinates.
pub fn triangulate_normalized<T: Real>(
    pose_a: &Pose<T>,
    pose_b: &Pose<T>,
    na: &Vector2<T>,
    nb: &Vector2<T>,
) -> Result<Vector3<T>> {
    let ba = Vector3::new(na.x, na.y, T::one());
    let bb = Vector3::new(nb.x, nb.y, T::one());
    let baseline = (pose_a.center() - pose_b.center()).norm();
    let angle = parallax_angle(pose_a, pose_b, &ba.normalize(), &bb.normalize());
    let min_angle = T::lit(MIN_TRIANGULATION_PARALLAX);
    let scale = pose_a.translation.norm() + pose_b.translation.norm() + T::one();
    if angle < min_angle || baseline <= T::lit(1e-12) * scale {
        return Err(Error::LowParallax {
            angle: angle.as_f64(),
        });
    }

    let pa = pose_a.matrix3x4();
    let pb = pose_b.matrix3x4();
    let mut a = Matrix4::<T>::zeros();
    for (row, (p, n)) in [(&pa, na), (&pb, nb)].into_iter().enumerate() {
        let r0 = p.row(2) * n.x - p.row(0);
        let r1 = p.row(2) * n.y - p.row(1);
        a.row_mut(2 * row).copy_from(&(r0 / r0.norm()));
        a.row_mut(2 * row + 1).copy_from(&(r1 / r1.norm()));
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::NonFinite("triangulation SVD"))?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, T::max_value().unwrap_or(T::lit(f64::MAX))), |acc, (i, s)| {
            if *s < acc.1 {
                (i, *s)
            } else {
                acc
            }
        });
    let h = v_t.row(imin).transpose();
    if h[3].abs() <= T::machine_eps() * h.norm() {
        return Err(Error::LowParallax {
            angle: angle.as_f64(),
        });
    }
    let x = Vector3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    if !(pose_a.transform_point(&x).z > T::zero() && pose_b.transform_point(&x).z > T::zero()) {
        return Err(Error::Cheirality);
    }
    Ok(x)
}

/// Skew-symmetric cross-product matrix `[v]×`.
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -v.z,
        v.y,
        v.z,
        T::zero(),
        -v.x,
        -v.y,
        v.x,
        T::zero(),
    )
}
