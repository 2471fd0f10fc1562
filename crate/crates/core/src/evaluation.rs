//! Trajectory metrics: similarity alignment, absolute trajectory error and final drift.
//!
//! Trajectories hold camera-in-world poses, i.e. `pose.translation` is the camera
//! position. Use [`Trajectory::push_world_to_camera`] to add tracker output.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::scalar::Real;

/// Default association tolerance in seconds.
pub const DEFAULT_MAX_DT: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T: Real> {
    pub timestamp: f64,
    /// Camera-to-world transform.
    pub pose: Pose<T>,
}

/// Time-ordered camera poses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<T: Real> {
    samples: Vec<Sample<T>>,
}

impl<T: Real> Trajectory<T> {
    pub fn new() -> Self {
        Trajectory { samples: Vec::new() }
    }

    /// Builds a trajectory, checking that timestamps strictly increase.
    pub fn from_samples(samples: Vec<Sample<T>>) -> Result<Self> {
        let mut t = Trajectory::new();
        for s in samples {
            t.push(s.timestamp, s.pose)?;
        }
        Ok(t)
    }

    /// Appends a camera-to-world pose.
    pub fn push(&mut self, timestamp: f64, pose: Pose<T>) -> Result<()> {
        if !timestamp.is_finite() {
            return Err(Error::NonFinite("trajectory timestamp"));
        }
        if let Some(last) = self.samples.last() {
            if timestamp <= last.timestamp {
                return Err(Error::Precondition(format!(
                    "timestamps must increase: {timestamp} after {}",
                    last.timestamp
                )));
            }
        }
        self.samples.push(Sample { timestamp, pose });
        Ok(())
    }

    /// Appends a world-to-camera pose as produced by the tracker.
    pub fn push_world_to_camera(&mut self, timestamp: f64, pose: &Pose<T>) -> Result<()> {
        self.push(timestamp, pose.inverse())
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn positions(&self) -> Vec<Vector3<T>> {
        self.samples.iter().map(|s| s.pose.translation).collect()
    }

    /// Sum of distances between consecutive positions.
    pub fn path_length(&self) -> T {
        self.samples
            .windows(2)
            .fold(T::zero(), |acc, w| acc + (w[1].pose.translation - w[0].pose.translation).norm())
    }

    /// Parses the `timestamp tx ty tz qx qy qz qw` text format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut traj = Trajectory::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
            let vals = line
                .split_whitespace()
                .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("{f:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != 8 {
                return Err(parse_err(format!("expected 8 fields, found {}", vals.len())));
            }
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(parse_err("non-finite value".into()));
            }
            let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
            if !(q.norm() > 1e-6) {
                return Err(parse_err("zero quaternion".into()));
            }
            let pose = Pose::new(
                UnitQuaternion::from_quaternion(q).cast::<T>(),
                Vector3::new(vals[1], vals[2], vals[3]).cast::<T>(),
            );
            traj.push(vals[0], pose).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(traj)
    }

    /// Renders the text format; values round-trip exactly through [`Trajectory::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
        for s in &self.samples {
            let p = &s.pose.translation;
            let q = &s.pose.rotation;
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                s.timestamp,
                p.x.as_f64(),
                p.y.as_f64(),
                p.z.as_f64(),
                q.i.as_f64(),
                q.j.as_f64(),
                q.k.as_f64(),
                q.w.as_f64()
            );
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Ok(std::fs::write(path, self.to_text())?)
    }
}

/// `p ↦ s·R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity<T: Real> {
    pub scale: T,
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> Similarity<T> {
    pub fn identity() -> Self {
        Similarity {
            scale: T::one(),
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p * self.scale + self.translation
    }
}

/// Least-squares similarity taking `source` onto `target` (Umeyama's closed form).
pub fn umeyama_align<T: Real>(source: &[Vector3<T>], target: &[Vector3<T>]) -> Result<Similarity<T>> {
    if source.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} source points, {} target points",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    if n < 3 {
        return Err(Error::Precondition(format!("alignment needs at least 3 pairs, got {n}")));
    }
    let inv_n = T::one() / T::lit(n as f64);
    let mu_s = source.iter().fold(Vector3::zeros(), |a, p| a + p) * inv_n;
    let mu_t = target.iter().fold(Vector3::zeros(), |a, p| a + p) * inv_n;
    let mut cov = Matrix3::zeros();
    let mut src_cov = Matrix3::zeros();
    let mut var_s = T::zero();
    for (s, t) in source.iter().zip(target) {
        let ds = s - mu_s;
        cov += (t - mu_t) * ds.transpose();
        src_cov += ds * ds.transpose();
        var_s += ds.norm_squared();
    }
    cov *= inv_n;
    var_s *= inv_n;

    let spread = src_cov.symmetric_eigenvalues();
    let (lo, hi) = sorted2(&spread);
    if !(hi > T::zero()) || !(lo > T::lit(1e-12) * hi) {
        return Err(Error::Degenerate("alignment points are collinear"));
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Vector3::repeat(T::one());
    if (u.determinant() * v_t.determinant()) < T::zero() {
        // Reflection guard: flip the axis of the smallest singular value.
        let k = argmin(&svd.singular_values);
        d[k] = -T::one();
    }
    let rotation = u * Matrix3::from_diagonal(&d) * v_t;
    let scale = svd.singular_values.component_mul(&d).sum() / var_s;
    let translation = mu_t - rotation * mu_s * scale;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

fn sorted2<T: Real>(v: &Vector3<T>) -> (T, T) {
    let mut a = [v[0], v[1], v[2]];
    a.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    // Second largest against largest: rank < 2 means collinear.
    (a[1], a[2])
}

fn argmin<T: Real>(v: &Vector3<T>) -> usize {
    (1..3).fold(0, |k, i| if v[i] < v[k] { i } else { k })
}

/// Matched estimate/ground-truth positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Pair<T: Real> {
    pub est_time: f64,
    pub gt_time: f64,
    pub est: Vector3<T>,
    pub gt: Vector3<T>,
}

/// One-to-one nearest-timestamp matching within `max_dt` seconds, ordered by time.
pub fn associate<T: Real>(est: &Trajectory<T>, gt: &Trajectory<T>, max_dt: f64) -> Result<Vec<Pair<T>>> {
    if est.is_empty() || gt.is_empty() {
        return Err(Error::Association);
    }
    let gt_times: Vec<f64> = gt.samples.iter().map(|s| s.timestamp).collect();
    let mut candidates = Vec::new();
    for (i, s) in est.samples.iter().enumerate() {
        let j = gt_times.partition_point(|&t| t < s.timestamp);
        for k in [j.wrapping_sub(1), j] {
            if let Some(&t) = gt_times.get(k) {
                let dt = (t - s.timestamp).abs();
                if dt <= max_dt {
                    candidates.push((dt, i, k));
                }
            }
        }
    }
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut est_used = vec![false; est.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, k) in candidates {
        if est_used[i] || gt_used[k] {
            continue;
        }
        est_used[i] = true;
        gt_used[k] = true;
        pairs.push((i, k));
    }
    if pairs.is_empty() {
        return Err(Error::Association);
    }
    pairs.sort_unstable();
    Ok(pairs
        .into_iter()
        .map(|(i, k)| Pair {
            est_time: est.samples[i].timestamp,
            gt_time: gt.samples[k].timestamp,
            est: est.samples[i].pose.translation,
            gt: gt.samples[k].pose.translation,
        })
        .collect())
}

/// Result of [`ate`].
#[derive(Debug, Clone)]
pub struct AteReport<T: Real> {
    pub rmse: T,
    /// `rmse` as a percentage of the ground-truth path length.
    pub rmse_pct: T,
    pub alignment: Similarity<T>,
    pub pairs: Vec<Pair<T>>,
    /// Position error of each pair after alignment.
    pub errors: Vec<T>,
    pub gt_path_length: T,
}

/// Absolute trajectory error after similarity alignment of `est` onto `gt`.
pub fn ate<T: Real>(est: &Trajectory<T>, gt: &Trajectory<T>, max_dt: f64) -> Result<AteReport<T>> {
    let pairs = associate(est, gt, max_dt)?;
    let src: Vec<_> = pairs.iter().map(|p| p.est).collect();
    let dst: Vec<_> = pairs.iter().map(|p| p.gt).collect();
    let alignment = umeyama_align(&src, &dst)?;
    let errors: Vec<T> = pairs.iter().map(|p| (alignment.apply(&p.est) - p.gt).norm()).collect();
    let mse = errors.iter().fold(T::zero(), |a, e| a + *e * *e) / T::lit(errors.len() as f64);
    let rmse = mse.sqrt();
    let gt_path_length = gt.path_length();
    let rmse_pct = percent(rmse, gt_path_length);
    Ok(AteReport {
        rmse,
        rmse_pct,
        alignment,
        pairs,
        errors,
        gt_path_length,
    })
}

/// `(rmse, rmse as % of ground-truth path length)`.
pub fn ate_rmse<T: Real>(est: &Trajectory<T>, gt: &Trajectory<T>) -> Result<(T, T)> {
    let r = ate(est, gt, DEFAULT_MAX_DT)?;
    Ok((r.rmse, r.rmse_pct))
}

/// Aligned distance between the last matched positions, as % of ground-truth path length.
pub fn final_drift_pct<T: Real>(est: &Trajectory<T>, gt: &Trajectory<T>) -> Result<T> {
    let r = ate(est, gt, DEFAULT_MAX_DT)?;
    Ok(drift_from_report(&r))
}

pub(crate) fn drift_from_report<T: Real>(r: &AteReport<T>) -> T {
    percent(*r.errors.last().expect("association yields pairs"), r.gt_path_length)
}

fn percent<T: Real>(v: T, length: T) -> T {
    if length > T::zero() {
        v / length * T::lit(100.0)
    } else {
        T::lit(f64::INFINITY)
    }
}

/// The three headline metrics together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub ate_rmse: f64,
    pub ate_pct: f64,
    pub drift_pct: f64,
}

pub fn metrics<T: Real>(est: &Trajectory<T>, gt: &Trajectory<T>, max_dt: f64) -> Result<(Metrics, AteReport<T>)> {
    let r = ate(est, gt, max_dt)?;
    let m = Metrics {
        ate_rmse: r.rmse.as_f64(),
        ate_pct: r.rmse_pct.as_f64(),
        drift_pct: drift_from_report(&r).as_f64(),
    };
    Ok((m, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix4, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Horn's quaternion method followed by the least-squares scale for that rotation.
    fn horn_oracle(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Similarity<f64> {
        let n = src.len() as f64;
        let cs = src.iter().sum::<Vector3<f64>>() / n;
        let cd = dst.iter().sum::<Vector3<f64>>() / n;
        let mut m = Matrix3::zeros();
        for (a, b) in src.iter().zip(dst) {
            m += (a - cs) * (b - cd).transpose();
        }
        let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
        let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
        let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
        let big = Matrix4::new(
            sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
            syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
            szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
            sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
        );
        let eig = SymmetricEigen::new(big);
        let k = eig.eigenvalues.imax();
        let v = eig.eigenvectors.column(k);
        let q = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
        let r = q.to_rotation_matrix().into_inner();
        let num: f64 = src.iter().zip(dst).map(|(a, b)| (b - cd).dot(&(r * (a - cs)))).sum();
        let den: f64 = src.iter().map(|a| (a - cs).norm_squared()).sum();
        let s = num / den;
        Similarity {
            scale: s,
            rotation: r,
            translation: cd - r * cs * s,
        }
    }

    fn oracle_rmse(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> f64 {
        let sim = horn_oracle(src, dst);
        let sum: f64 = src.iter().zip(dst).map(|(a, b)| (sim.apply(a) - b).norm_squared()).sum();
        (sum / src.len() as f64).sqrt()
    }

    fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
        UnitQuaternion::from_scaled_axis(Vector3::new(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        ))
    }

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
            .collect()
    }

    fn traj_from(points: &[Vector3<f64>], t0: f64, dt: f64) -> Trajectory<f64> {
        let mut t = Trajectory::new();
        for (i, p) in points.iter().enumerate() {
            t.push(t0 + dt * i as f64, Pose::new(UnitQuaternion::identity(), *p)).unwrap();
        }
        t
    }

    #[test]
    fn self_alignment_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = random_points(&mut rng, 20);
        let sim = umeyama_align(&pts, &pts).unwrap();
        assert!((sim.scale - 1.0).abs() < 1e-12);
        assert!((sim.rotation - Matrix3::identity()).amax() < 1e-12);
        assert!(sim.translation.amax() < 1e-12);
    }

    #[test]
    fn known_similarity_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let pts = random_points(&mut rng, 15);
            let r = random_rotation(&mut rng).to_rotation_matrix().into_inner();
            let t = Vector3::new(rng.gen_range(-10.0..10.0), 3.0, -1.0);
            let truth = Similarity { scale: 2.5, rotation: r, translation: t };
            let dst: Vec<_> = pts.iter().map(|p| truth.apply(p)).collect();
            let sim = umeyama_align(&pts, &dst).unwrap();
            assert!((sim.scale - 2.5).abs() < 1e-9);
            assert!((sim.rotation - r).amax() < 1e-9);
            assert!((sim.translation - t).amax() < 1e-9);
            assert!((sim.rotation.determinant() - 1.0).abs() < 1e-10);
            for (p, q) in pts.iter().zip(&dst) {
                assert!((sim.apply(p) - q).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn alignment_matches_quaternion_oracle_on_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let pts = random_points(&mut rng, 30);
            let r = random_rotation(&mut rng).to_rotation_matrix().into_inner();
            let dst: Vec<_> = pts
                .iter()
                .map(|p| r * p * 0.7 + Vector3::new(1.0, 2.0, 3.0) + random_points(&mut rng, 1)[0] * 0.05)
                .collect();
            let sim = umeyama_align(&pts, &dst).unwrap();
            let oracle = horn_oracle(&pts, &dst);
            assert!((sim.scale - oracle.scale).abs() < 1e-9);
            assert!((sim.rotation - oracle.rotation).amax() < 1e-9);
            assert!((sim.translation - oracle.translation).amax() < 1e-9);
        }
    }

    #[test]
    fn reflections_are_not_returned() {
        let pts = vec![
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
            Vector3::new(1.0, 1.0, 1.0),
        ];
        let mirrored: Vec<_> = pts.iter().map(|p| Vector3::new(-p.x, p.y, p.z)).collect();
        let sim: Similarity<f64> = umeyama_align(&pts, &mirrored).unwrap();
        assert!((sim.rotation.determinant() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn alignment_preconditions() {
        let two = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        assert!(matches!(umeyama_align(&two, &two), Err(Error::Precondition(_))));
        let line: Vec<_> = (0..5).map(|i| Vector3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(umeyama_align(&line, &line), Err(Error::Degenerate(_))));
    }

    #[test]
    fn association_pairs_nearest_timestamps() {
        let pts: Vec<_> = (0..50).map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.01, 0.0)).collect();
        let gt = traj_from(&pts, 0.0, 1.0 / 16.0);
        assert_eq!(associate(&gt, &gt, DEFAULT_MAX_DT).unwrap().len(), 50);
        let est = traj_from(&pts, 0.005, 1.0 / 16.0);
        let pairs = associate(&est, &gt, DEFAULT_MAX_DT).unwrap();
        assert_eq!(pairs.len(), 50);
        assert!(pairs.iter().all(|p| (p.est_time - p.gt_time - 0.005).abs() < 1e-12));
        let late = traj_from(&pts, 100.0, 1.0 / 16.0);
        assert_eq!(associate(&late, &gt, DEFAULT_MAX_DT), Err(Error::Association));
    }

    #[test]
    fn association_is_one_to_one() {
        let gt = traj_from(&random_points(&mut ChaCha8Rng::seed_from_u64(4), 10), 0.0, 0.1);
        // Two estimates crowd around the same ground-truth stamp.
        let mut est = Trajectory::new();
        for t in [0.099, 0.101, 0.3] {
            est.push(t, Pose::identity()).unwrap();
        }
        let pairs = associate(&est, &gt, 0.02).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!((pairs[0].est_time, pairs[0].gt_time), (0.099, 0.1));
        assert_eq!((pairs[1].est_time, pairs[1].gt_time), (0.3, 0.30000000000000004));
    }

    #[test]
    fn ate_is_zero_under_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts = random_points(&mut rng, 40);
        let gt = traj_from(&pts, 0.0, 0.1);
        assert!(ate_rmse(&gt, &gt).unwrap().0 < 1e-12);
        let r = random_rotation(&mut rng).to_rotation_matrix().into_inner();
        let moved: Vec<_> = pts.iter().map(|p| r * p * 0.31 + Vector3::new(4.0, -2.0, 7.0)).collect();
        let est = traj_from(&moved, 0.0, 0.1);
        let (rmse, pct) = ate_rmse(&est, &gt).unwrap();
        assert!(rmse < 1e-9 && pct < 1e-9);
        assert!(final_drift_pct(&est, &gt).unwrap() < 1e-9);
    }

    #[test]
    fn ate_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let pts = random_points(&mut rng, 25);
        let gt = traj_from(&pts, 0.0, 0.1);
        for k in 0..25 {
            let mut perturbed = pts.clone();
            perturbed[k].y += 0.1;
            let est = traj_from(&perturbed, 0.0, 0.1);
            let (rmse, pct) = ate_rmse(&est, &gt).unwrap();
            let expected = oracle_rmse(&perturbed, &pts);
            assert!((rmse - expected).abs() < 1e-12, "{rmse} {expected}");
            // Alignment absorbs part of the error, never adds to it.
            assert!(rmse <= 0.1 / 25f64.sqrt() + 1e-12);
            assert!((pct - rmse / gt.path_length() * 100.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ate_is_symmetric_in_time_reversal_and_similarity_of_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pts = random_points(&mut rng, 30);
        let noisy: Vec<_> = pts.iter().map(|p| p + random_points(&mut rng, 1)[0] * 0.02).collect();
        let gt = traj_from(&pts, 0.0, 0.1);
        let est = traj_from(&noisy, 0.0, 0.1);
        let base = ate_rmse(&est, &gt).unwrap().0;

        let rev = |v: &[Vector3<f64>]| -> Trajectory<f64> {
            let r: Vec<_> = v.iter().rev().copied().collect();
            traj_from(&r, -2.9, 0.1)
        };
        assert!((ate_rmse(&rev(&noisy), &rev(&pts)).unwrap().0 - base).abs() < 1e-12);

        let r = random_rotation(&mut rng).to_rotation_matrix().into_inner();
        let moved: Vec<_> = noisy.iter().map(|p| r * p * 3.3 - Vector3::new(1.0, 5.0, 2.0)).collect();
        let moved_est = traj_from(&moved, 0.0, 0.1);
        assert!((ate_rmse(&moved_est, &gt).unwrap().0 - base).abs() < 1e-9);
    }

    #[test]
    fn endpoint_offset_gives_expected_drift() {
        // 1001 samples along three quarters of a circle, 100 units of arc; only the last is displaced by 1.
        let radius = 100.0 / (1.5 * std::f64::consts::PI);
        let pts: Vec<_> = (0..=1000)
            .map(|i| {
                let a = 1.5 * std::f64::consts::PI * i as f64 / 1000.0;
                Vector3::new(radius * a.cos(), radius * a.sin(), 0.0)
            })
            .collect();
        let mut shifted = pts.clone();
        shifted[1000].z += 1.0;
        let gt = traj_from(&pts, 0.0, 0.1);
        let est = traj_from(&shifted, 0.0, 0.1);
        let drift = final_drift_pct(&est, &gt).unwrap();

        let sim = horn_oracle(&shifted, &pts);
        let oracle = (sim.apply(&shifted[1000]) - pts[1000]).norm() / gt.path_length() * 100.0;
        assert!((drift - oracle).abs() < 1e-9, "{drift} {oracle}");
        // With a thousand other samples the alignment barely moves.
        let length = gt.path_length();
        assert!((drift - 100.0 / length).abs() < 0.01, "{drift} over {length}");
    }

    #[test]
    fn text_format_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut t = Trajectory::new();
        for i in 0..10 {
            t.push(1.5 + i as f64 / 16.0, Pose::new(random_rotation(&mut rng), random_points(&mut rng, 1)[0]))
                .unwrap();
        }
        let back = Trajectory::<f64>::parse(&t.to_text()).unwrap();
        assert_eq!(back.len(), 10);
        for (a, b) in t.samples().iter().zip(back.samples()) {
            assert_eq!(a.timestamp, b.timestamp);
            assert_eq!(a.pose.translation, b.pose.translation);
            assert!(a.pose.rotation.angle_to(&b.pose.rotation) < 1e-15);
        }
    }

    #[test]
    fn malformed_lines_are_reported() {
        let text = "# comment\n0.0 0 0 0 0 0 0 1\n\n0.1 0 0 0 0 0 1\n";
        assert!(matches!(Trajectory::<f64>::parse(text), Err(Error::Parse { line: 4, .. })));
        let backwards = "1.0 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n";
        assert!(matches!(Trajectory::<f64>::parse(backwards), Err(Error::Parse { line: 2, .. })));
    }
}
