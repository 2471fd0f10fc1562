//! Seeded adaptive RANSAC and the estimators used by the tracker.

use nalgebra::{Vector2, Vector3};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::essential::{essential_5pt, Correspondence, EssentialMatrix};
use super::p3p::{angular_error, p3p};
use super::refine::{default_refine_options, refine_pose};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Pose};
use crate::scalar::Real;

/// A minimal solver plus its residual.
pub trait Estimator<T: Real> {
    type Datum;
    type Model: Clone;

    fn sample_size(&self) -> usize;

    /// Extra sampled data used to pick one of several candidate models before scoring.
    fn validation_size(&self) -> usize {
        0
    }

    fn fit(&self, sample: &[&Self::Datum]) -> Vec<Self::Model>;

    fn residual(&self, model: &Self::Model, datum: &Self::Datum) -> T;

    /// Re-estimates the model from all inliers, when the solver supports it.
    fn refit(&self, _model: &Self::Model, _inliers: &[&Self::Datum]) -> Option<Self::Model> {
        None
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RansacOptions<T: Real> {
    /// Inlier threshold in residual units (radians for the bundled estimators).
    pub threshold: T,
    pub confidence: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl<T: Real> Default for RansacOptions<T> {
    fn default() -> Self {
        Self {
            threshold: T::lit(1.5e-3),
            confidence: 0.99,
            max_iters: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RansacResult<M> {
    pub model: M,
    pub inliers: Vec<usize>,
    pub iterations_run: usize,
    pub inlier_ratio: f64,
}

fn required_iterations(inlier_ratio: f64, sample: usize, confidence: f64) -> usize {
    let good = inlier_ratio.powi(sample as i32);
    if good >= 1.0 {
        return 1;
    }
    if good <= 0.0 {
        return usize::MAX;
    }
    let k = (1.0 - confidence).ln() / (1.0 - good).ln();
    if k.is_finite() {
        k.ceil().max(1.0) as usize
    } else {
        usize::MAX
    }
}

fn inliers_of<T: Real, E: Estimator<T>>(
    est: &E,
    model: &E::Model,
    data: &[E::Datum],
    threshold: T,
) -> Vec<usize> {
    data.iter()
        .enumerate()
        .filter(|(_, d)| {
            let r = est.residual(model, d);
            r.is_finite() && r <= threshold
        })
        .map(|(i, _)| i)
        .collect()
}

/// Adaptive-iteration RANSAC. Deterministic for a fixed seed.
pub fn ransac<T: Real, E: Estimator<T>>(
    data: &[E::Datum],
    estimator: &E,
    opts: &RansacOptions<T>,
) -> Result<RansacResult<E::Model>> {
    let s = estimator.sample_size();
    let n = data.len();
    if n < s {
        return Err(Error::InsufficientData { needed: s, got: n });
    }
    let draw = (s + estimator.validation_size()).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(E::Model, Vec<usize>)> = None;
    let mut required = opts.max_iters;
    let mut iterations = 0;

    while iterations < required.min(opts.max_iters) {
        iterations += 1;
        let idx = index::sample(&mut rng, n, draw).into_vec();
        let sample: Vec<&E::Datum> = idx[..s].iter().map(|&i| &data[i]).collect();
        let mut candidates = estimator.fit(&sample);
        if draw > s && candidates.len() > 1 {
            let score = |m: &E::Model| {
                idx[s..]
                    .iter()
                    .map(|&i| estimator.residual(m, &data[i]).as_f64())
                    .sum::<f64>()
            };
            let chosen = candidates
                .iter()
                .map(score)
                .enumerate()
                .filter(|(_, v)| v.is_finite())
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i);
            candidates = match chosen {
                Some(i) => vec![candidates.swap_remove(i)],
                None => Vec::new(),
            };
        }
        for model in candidates {
            let inl = inliers_of(estimator, &model, data, opts.threshold);
            if best.as_ref().is_none_or(|(_, b)| inl.len() > b.len()) {
                required = required_iterations(inl.len() as f64 / n as f64, s, opts.confidence);
                best = Some((model, inl));
            }
        }
    }

    let (mut model, mut inliers) = best.ok_or_else(|| Error::EstimationFailure("no model hypothesis".into()))?;
    if inliers.len() < s + 1 {
        return Err(Error::EstimationFailure(format!(
            "best model has {} inliers, needs {}",
            inliers.len(),
            s + 1
        )));
    }
    let refs: Vec<&E::Datum> = inliers.iter().map(|&i| &data[i]).collect();
    if let Some(refit) = estimator.refit(&model, &refs) {
        let refit_inliers = inliers_of(estimator, &refit, data, opts.threshold);
        if refit_inliers.len() >= inliers.len() {
            model = refit;
            inliers = refit_inliers;
        }
    }
    let inlier_ratio = inliers.len() as f64 / n as f64;
    Ok(RansacResult {
        model,
        inliers,
        iterations_run: iterations,
        inlier_ratio,
    })
}

/// Five-point essential matrix hypotheses scored by symmetric angular epipolar distance.
#[derive(Debug, Clone, Copy, Default)]
pub struct EssentialEstimator;

impl<T: Real> Estimator<T> for EssentialEstimator {
    type Datum = Correspondence<T>;
    type Model = EssentialMatrix<T>;

    fn sample_size(&self) -> usize {
        5
    }

    fn fit(&self, sample: &[&Correspondence<T>]) -> Vec<EssentialMatrix<T>> {
        let a: Vec<_> = sample.iter().map(|c| c.a).collect();
        let b: Vec<_> = sample.iter().map(|c| c.b).collect();
        essential_5pt(&a, &b).unwrap_or_default()
    }

    fn residual(&self, model: &EssentialMatrix<T>, datum: &Correspondence<T>) -> T {
        model.angular_residual(datum)
    }
}

/// A 2D-3D correspondence for absolute pose estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointObservation<T: Real> {
    pub bearing: Vector3<T>,
    pub point: Vector3<T>,
    /// Undistorted pixel, used by the optional refit.
    pub pixel: Vector2<T>,
}

/// P3P hypotheses disambiguated with a fourth sampled correspondence, scored by angular error.
#[derive(Debug, Clone, Copy)]
pub struct P3pEstimator<T: Real> {
    /// When set, the winning pose is refined on all inliers by reprojection error.
    pub refit_camera: Option<CameraModel<T>>,
}

impl<T: Real> Estimator<T> for P3pEstimator<T> {
    type Datum = PointObservation<T>;
    type Model = Pose<T>;

    fn sample_size(&self) -> usize {
        3
    }

    fn validation_size(&self) -> usize {
        1
    }

    fn fit(&self, sample: &[&PointObservation<T>]) -> Vec<Pose<T>> {
        let bearings = [sample[0].bearing, sample[1].bearing, sample[2].bearing];
        let points = [sample[0].point, sample[1].point, sample[2].point];
        p3p(&bearings, &points).unwrap_or_default()
    }

    fn residual(&self, model: &Pose<T>, datum: &PointObservation<T>) -> T {
        angular_error(model, &datum.bearing, &datum.point)
    }

    fn refit(&self, model: &Pose<T>, inliers: &[&PointObservation<T>]) -> Option<Pose<T>> {
        let cam = self.refit_camera.as_ref()?;
        let pts: Vec<_> = inliers.iter().map(|d| d.point).collect();
        let px: Vec<_> = inliers.iter().map(|d| d.pixel).collect();
        let r = refine_pose(model, cam, &pts, &px, &default_refine_options()).ok()?;
        (!r.failed).then_some(r.pose)
    }
}
