//! Absolute pose from three bearing/point correspondences (Kneip's closed form).

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{skew, Pose};
use crate::poly;
use crate::scalar::Real;

/// Angle between a unit bearing and the direction of a world point seen from `pose`.
///
/// Points behind the camera score `π`.
pub fn angular_error<T: Real>(pose: &Pose<T>, bearing: &Vector3<T>, point: &Vector3<T>) -> T {
    let pc = pose.transform_point(point);
    let n = pc.norm();
    if !(n > T::zero()) || pc.z <= T::zero() {
        return T::pi();
    }
    let c = (pc.dot(bearing) / (n * bearing.norm())).min(T::one()).max(-T::one());
    // acos loses precision near zero; the cross-product form does not.
    let s = pc.cross(bearing).norm() / (n * bearing.norm());
    s.atan2(c)
}

fn frame<T: Real>(f1: &Vector3<T>, f2: &Vector3<T>) -> Option<Matrix3<T>> {
    let e3 = f1.cross(f2);
    let n = e3.norm();
    if !(n > T::machine_eps()) {
        return None;
    }
    let e3 = e3 / n;
    let e2 = e3.cross(f1);
    Some(Matrix3::from_rows(&[f1.transpose(), e2.transpose(), e3.transpose()]))
}

/// Up to four world-to-camera poses explaining the three observations.
pub fn p3p<T: Real>(bearings: &[Vector3<T>; 3], points: &[Vector3<T>; 3]) -> Result<Vec<Pose<T>>> {
    let area = (points[1] - points[0]).cross(&(points[2] - points[0])).norm() / T::lit(2.0);
    if !(area > T::lit(1e-9)) {
        return Err(Error::Degenerate("p3p landmarks are collinear"));
    }
    let f: [Vector3<T>; 3] = [
        bearings[0].normalize(),
        bearings[1].normalize(),
        bearings[2].normalize(),
    ];
    let (mut f1, mut f2, f3) = (f[0], f[1], f[2]);
    let (mut p1, mut p2, p3) = (points[0], points[1], points[2]);
    let mut t = frame(&f1, &f2).ok_or(Error::Degenerate("p3p bearings are parallel"))?;
    if (t * f3).z > T::zero() {
        std::mem::swap(&mut f1, &mut f2);
        std::mem::swap(&mut p1, &mut p2);
        t = frame(&f1, &f2).ok_or(Error::Degenerate("p3p bearings are parallel"))?;
    }
    let f3t = t * f3;
    if f3t.z.abs() <= T::machine_eps() {
        return Err(Error::Degenerate("p3p bearings are coplanar"));
    }

    let n1 = (p2 - p1).normalize();
    let n3 = n1.cross(&(p3 - p1)).normalize();
    let n2 = n3.cross(&n1);
    let nm = Matrix3::from_rows(&[n1.transpose(), n2.transpose(), n3.transpose()]);
    let p3n = nm * (p3 - p1);

    let d12 = (p2 - p1).norm();
    let f_1 = f3t.x / f3t.z;
    let f_2 = f3t.y / f3t.z;
    let p_1 = p3n.x;
    let p_2 = p3n.y;
    if f_2.abs() <= T::machine_eps() {
        return Err(Error::Degenerate("p3p third bearing lies in the first plane"));
    }

    let cos_beta = f1.dot(&f2);
    let mut b = (T::one() / (T::one() - cos_beta * cos_beta) - T::one()).max(T::zero()).sqrt();
    if cos_beta < T::zero() {
        b = -b;
    }

    let two = T::lit(2.0);
    let f12 = f_1 * f_1;
    let f22 = f_2 * f_2;
    let p12 = p_1 * p_1;
    let p13 = p12 * p_1;
    let p14 = p13 * p_1;
    let p22 = p_2 * p_2;
    let p23 = p22 * p_2;
    let p24 = p23 * p_2;
    let d2 = d12 * d12;
    let b2 = b * b;

    let a4 = -f22 * p24 - p24 * f12 - p24;
    let a3 = two * p23 * d12 * b + two * f22 * p23 * d12 * b - two * f_2 * p23 * f_1 * d12;
    let a2 = -f22 * p22 * p12 - f22 * p22 * d2 * b2 - f22 * p22 * d2
        + f22 * p24
        + p24 * f12
        + two * p_1 * p22 * d12
        + two * f_1 * f_2 * p_1 * p22 * d12 * b
        - p22 * p12 * f12
        + two * p_1 * p22 * f22 * d12
        - p22 * d2 * b2
        - two * p12 * p22;
    let a1 = two * p12 * p_2 * d12 * b + two * f_2 * p23 * f_1 * d12
        - two * f22 * p23 * d12 * b
        - two * p_1 * p_2 * d2 * b;
    let a0 = -two * f_2 * p22 * f_1 * p_1 * d12 * b + f22 * p22 * d2 + two * p13 * d12 - p12 * d2
        + f22 * p22 * p12
        - p14
        - two * f22 * p22 * p_1 * d12
        + p22 * f12 * p12
        + f22 * p22 * d2 * b2;

    let mut poses = Vec::new();
    for cos_theta in poly::real_roots(&[a0, a1, a2, a3, a4], T::lit(1e-8)) {
        let cot_alpha = (-f_1 * p_1 / f_2 - cos_theta * p_2 + d12 * b)
            / (-f_1 * cos_theta * p_2 / f_2 + p_1 - d12);
        if !cot_alpha.is_finite() {
            continue;
        }
        let sin_theta = (T::one() - cos_theta * cos_theta).max(T::zero()).sqrt();
        let sin_alpha = (T::one() / (cot_alpha * cot_alpha + T::one())).sqrt();
        let mut cos_alpha = (T::one() - sin_alpha * sin_alpha).max(T::zero()).sqrt();
        if cot_alpha < T::zero() {
            cos_alpha = -cos_alpha;
        }
        let k = sin_alpha * b + cos_alpha;
        let c_local = Vector3::new(
            d12 * cos_alpha * k,
            cos_theta * d12 * sin_alpha * k,
            sin_theta * d12 * sin_alpha * k,
        );
        let center = p1 + nm.transpose() * c_local;
        let q = Matrix3::new(
            -cos_alpha,
            -sin_alpha * cos_theta,
            -sin_alpha * sin_theta,
            sin_alpha,
            -cos_alpha * cos_theta,
            -cos_alpha * sin_theta,
            T::zero(),
            -sin_theta,
            cos_theta,
        );
        // Camera-to-world rotation.
        let r_cw = nm.transpose() * q.transpose() * t;
        let r_wc = r_cw.transpose();
        let pose = Pose::from_rotation_matrix(&r_wc, -(r_wc * center));
        if !pose.is_finite() {
            continue;
        }
        // The quartic also has roots for the mirrored plane rotation; those do not
        // reproduce the bearings and are dropped.
        let pose = polish(pose, &f, points);
        let consistent = (0..3).all(|i| angular_error(&pose, &f[i], &points[i]) < T::lit(1e-6));
        if consistent {
            poses.push(pose);
        }
    }
    Ok(poses)
}

/// A few Gauss-Newton steps on the bearing residuals, kept only if they help.
fn polish<T: Real>(pose: Pose<T>, bearings: &[Vector3<T>; 3], points: &[Vector3<T>; 3]) -> Pose<T> {
    let residual = |p: &Pose<T>| -> SVector<T, 9> {
        let mut r = SVector::<T, 9>::zeros();
        for i in 0..3 {
            let pc = p.transform_point(&points[i]);
            r.fixed_rows_mut::<3>(3 * i).copy_from(&(pc.normalize() - bearings[i]));
        }
        r
    };
    let mut best = pose;
    let mut r = residual(&best);
    for _ in 0..3 {
        let mut j = SMatrix::<T, 9, 6>::zeros();
        for i in 0..3 {
            let pc = best.transform_point(&points[i]);
            let n = pc.norm();
            let u = pc / n;
            let dn = (Matrix3::identity() - u * u.transpose()) / n;
            j.fixed_view_mut::<3, 3>(3 * i, 0).copy_from(&(dn * -skew(&pc)));
            j.fixed_view_mut::<3, 3>(3 * i, 3).copy_from(&dn);
        }
        let Some(step) = (j.transpose() * j)
            .try_inverse()
            .map(|inv| inv * (j.transpose() * r))
        else {
            break;
        };
        let omega = -step.fixed_rows::<3>(0).into_owned();
        let v = -step.fixed_rows::<3>(3).into_owned();
        let candidate = best.retract(&omega, &v);
        let rc = residual(&candidate);
        if !(rc.norm() < r.norm()) {
            break;
        }
        best = candidate;
        r = rc;
    }
    best
}
