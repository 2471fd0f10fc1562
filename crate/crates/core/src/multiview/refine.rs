//! Nonlinear refinement of a single camera pose against known landmarks.

use nalgebra::{DVector, Matrix2x3, Matrix6, SMatrix, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::geometry::{skew, CameraModel, Pose};
use crate::optimizer::{minimize, LmOptions, LmProblem, Termination};
use crate::scalar::Real;

/// Outcome of [`refine_pose`].
#[derive(Debug, Clone)]
pub struct PoseRefinement<T: Real> {
    pub pose: Pose<T>,
    pub initial_cost: T,
    pub final_cost: T,
    pub iterations: usize,
    /// Cost after each accepted step, starting with the initial cost.
    pub accepted_costs: Vec<T>,
    /// Set when no step could be taken from a non-optimal start; `pose` is then the input.
    pub failed: bool,
}

impl<T: Real> PoseRefinement<T> {
    /// Root-mean-square pixel error after refinement.
    pub fn rmse(&self, n: usize) -> T {
        (self.final_cost / T::lit(n.max(1) as f64)).sqrt()
    }
}

/// Iteration limits used by the tracker.
pub fn default_refine_options<T: Real>() -> LmOptions<T> {
    LmOptions {
        max_iters: 20,
        gradient_tol: T::lit(1e-8),
        step_tol: T::lit(1e-10),
        ..LmOptions::default()
    }
}

struct PoseProblem<'a, T: Real> {
    cam: &'a CameraModel<T>,
    landmarks: &'a [Vector3<T>],
    observations: &'a [Vector2<T>],
    h: Matrix6<T>,
    g: Vector6<T>,
}

impl<T: Real> PoseProblem<'_, T> {
    fn residual(&self, pose: &Pose<T>, i: usize) -> Option<(Vector2<T>, Vector3<T>)> {
        let pc = pose.transform_point(&self.landmarks[i]);
        let proj = self.cam.project_camera(&pc).ok()?;
        Some((self.observations[i] - proj, pc))
    }
}

impl<T: Real> LmProblem<T> for PoseProblem<'_, T> {
    type State = Pose<T>;

    fn cost(&mut self, pose: &Pose<T>) -> T {
        let mut total = T::zero();
        for i in 0..self.landmarks.len() {
            match self.residual(pose, i) {
                Some((r, _)) => total += r.norm_squared(),
                None => return T::lit(f64::INFINITY),
            }
        }
        total
    }

    fn linearize(&mut self, pose: &Pose<T>) -> Result<T> {
        self.h = Matrix6::zeros();
        self.g = Vector6::zeros();
        for i in 0..self.landmarks.len() {
            let (r, pc) = self.residual(pose, i).ok_or(Error::BehindCamera {
                depth: pose.transform_point(&self.landmarks[i]).z.as_f64(),
            })?;
            let iz = T::one() / pc.z;
            let (fx, fy) = (self.cam.fx, self.cam.fy);
            let jpi = Matrix2x3::new(
                fx * iz,
                T::zero(),
                -fx * pc.x * iz * iz,
                T::zero(),
                fy * iz,
                -fy * pc.y * iz * iz,
            );
            let mut j = SMatrix::<T, 2, 6>::zeros();
            j.fixed_view_mut::<2, 3>(0, 0).copy_from(&(-jpi * -skew(&pc)));
            j.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-jpi));
            self.h += j.transpose() * j;
            self.g += j.transpose() * r;
        }
        Ok(self.g.amax())
    }

    fn solve_damped(&mut self, lambda: T) -> Option<DVector<T>> {
        let mut a = self.h;
        for i in 0..6 {
            let d = crate::optimizer::lm::damping_diagonal(a[(i, i)]);
            a[(i, i)] += lambda * d;
        }
        let step = a.cholesky()?.solve(&(-self.g));
        step.iter()
            .all(|v| v.is_finite())
            .then(|| DVector::from_column_slice(step.as_slice()))
    }

    fn retract(&self, pose: &Pose<T>, step: &DVector<T>) -> Pose<T> {
        pose.retract(
            &Vector3::new(step[0], step[1], step[2]),
            &Vector3::new(step[3], step[4], step[5]),
        )
    }
}

/// Minimizes the squared pixel reprojection error over the six pose degrees of freedom.
///
/// `observations` are undistorted pixels.
pub fn refine_pose<T: Real>(
    initial: &Pose<T>,
    cam: &CameraModel<T>,
    landmarks: &[Vector3<T>],
    observations: &[Vector2<T>],
    opts: &LmOptions<T>,
) -> Result<PoseRefinement<T>> {
    if landmarks.len() != observations.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} landmarks, {} observations",
            landmarks.len(),
            observations.len()
        )));
    }
    if landmarks.len() < 4 {
        return Err(Error::Precondition(format!(
            "pose refinement needs at least 4 correspondences, got {}",
            landmarks.len()
        )));
    }
    let mut problem = PoseProblem {
        cam,
        landmarks,
        observations,
        h: Matrix6::zeros(),
        g: Vector6::zeros(),
    };
    let report = minimize(&mut problem, *initial, opts)?;
    let stuck = report.accepted_costs.len() == 1
        && report.termination == Termination::DampingExhausted
        && report.initial_cost > T::zero();
    Ok(PoseRefinement {
        pose: if stuck { *initial } else { report.state },
        initial_cost: report.initial_cost,
        final_cost: report.final_cost,
        iterations: report.iterations,
        accepted_costs: report.accepted_costs,
        failed: stuck,
    })
}
