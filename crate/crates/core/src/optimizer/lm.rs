//! Levenberg-Marquardt driver shared by dense problems, pose refinement and bundle adjustment.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A nonlinear least-squares problem expressed through its damped normal equations.
///
/// `linearize` builds `H = JᵀWJ` and `g = JᵀWr` at a state; `solve_damped` then solves
/// `(H + λ D) δ = -g` with `D` the clamped diagonal of `H`.
pub trait LmProblem<T: Real> {
    type State: Clone;

    /// Total cost at `state`. A non-finite value marks the state as infeasible.
    fn cost(&mut self, state: &Self::State) -> T;

    /// Builds the normal equations at `state` and returns the gradient ∞-norm.
    fn linearize(&mut self, state: &Self::State) -> Result<T>;

    /// Solves the damped system built by the last `linearize`. `None` when singular.
    fn solve_damped(&mut self, lambda: T) -> Option<DVector<T>>;

    fn retract(&self, state: &Self::State, step: &DVector<T>) -> Self::State;
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions<T: Real> {
    pub max_iters: usize,
    pub gradient_tol: T,
    pub relative_cost_tol: T,
    pub step_tol: T,
    pub initial_lambda: T,
    pub max_lambda: T,
    /// Keep a per-attempt trace in the report.
    pub record_trace: bool,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 100,
            gradient_tol: T::lit(1e-8),
            relative_cost_tol: T::lit(1e-10),
            step_tol: T::lit(1e-10),
            initial_lambda: T::lit(1e-5),
            max_lambda: T::lit(1e16),
            record_trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    CostTolerance,
    StepTolerance,
    MaxIterations,
    DampingExhausted,
}

/// One step attempt.
#[derive(Debug, Clone, Copy)]
pub struct LmTraceEntry<T: Real> {
    pub iteration: usize,
    pub cost: T,
    pub candidate_cost: T,
    pub lambda: T,
    pub step_norm: T,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct LmReport<S, T: Real> {
    pub state: S,
    pub initial_cost: T,
    pub final_cost: T,
    pub iterations: usize,
    /// Cost after every accepted step, starting with the initial cost.
    pub accepted_costs: Vec<T>,
    pub trace: Vec<LmTraceEntry<T>>,
    pub termination: Termination,
}

impl<S, T: Real> LmReport<S, T> {
    /// Text dump: `iteration cost candidate_cost damping step_norm accepted` per line.
    pub fn write_trace(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# iteration cost candidate_cost damping step_norm accepted")?;
        for e in &self.trace {
            writeln!(
                out,
                "{} {:.12e} {:.12e} {:.6e} {:.6e} {}",
                e.iteration,
                e.cost.as_f64(),
                e.candidate_cost.as_f64(),
                e.lambda.as_f64(),
                e.step_norm.as_f64(),
                u8::from(e.accepted)
            )?;
        }
        Ok(())
    }

    pub fn map_state<U>(self, f: impl FnOnce(S) -> U) -> LmReport<U, T> {
        LmReport {
            state: f(self.state),
            initial_cost: self.initial_cost,
            final_cost: self.final_cost,
            iterations: self.iterations,
            accepted_costs: self.accepted_costs,
            trace: self.trace,
            termination: self.termination,
        }
    }
}

/// Diagonal entry used for Marquardt scaling.
#[inline]
pub fn damping_diagonal<T: Real>(h_ii: T) -> T {
    h_ii.max(T::lit(1e-6)).min(T::lit(1e32))
}

/// Runs Levenberg-Marquardt on `problem` from `x0`.
///
/// Damping is multiplied by 2 after a rejected step and by 1/3 after an accepted one;
/// accepted costs are strictly decreasing.
pub fn minimize<T: Real, P: LmProblem<T>>(
    problem: &mut P,
    x0: P::State,
    opts: &LmOptions<T>,
) -> Result<LmReport<P::State, T>> {
    let mut x = x0;
    let mut cost = problem.cost(&x);
    if !cost.is_finite() {
        return Err(Error::NonFinite("initial cost"));
    }
    let initial_cost = cost;
    let mut accepted_costs = vec![cost];
    let mut trace = Vec::new();
    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;

    let termination = 'outer: loop {
        if iterations >= opts.max_iters {
            break Termination::MaxIterations;
        }
        let grad = problem.linearize(&x)?;
        if !grad.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        if grad < opts.gradient_tol {
            break Termination::GradientTolerance;
        }
        iterations += 1;
        loop {
            let Some(step) = problem.solve_damped(lambda) else {
                lambda *= T::lit(2.0);
                if lambda > opts.max_lambda {
                    break 'outer Termination::DampingExhausted;
                }
                continue;
            };
            let step_norm = step.norm();
            if step_norm < opts.step_tol {
                break 'outer Termination::StepTolerance;
            }
            let candidate = problem.retract(&x, &step);
            let new_cost = problem.cost(&candidate);
            let accepted = new_cost.is_finite() && new_cost < cost;
            if opts.record_trace {
                trace.push(LmTraceEntry {
                    iteration: iterations,
                    cost,
                    candidate_cost: new_cost,
                    lambda,
                    step_norm,
                    accepted,
                });
            }
            if accepted {
                let rel = (cost - new_cost) / cost;
                x = candidate;
                cost = new_cost;
                accepted_costs.push(cost);
                lambda = (lambda / T::lit(3.0)).max(T::lit(1e-12));
                if rel < opts.relative_cost_tol {
                    break 'outer Termination::CostTolerance;
                }
                break;
            }
            lambda *= T::lit(2.0);
            if lambda > opts.max_lambda {
                break 'outer Termination::DampingExhausted;
            }
        }
    };

    Ok(LmReport {
        state: x,
        initial_cost,
        final_cost: cost,
        iterations,
        accepted_costs,
        trace,
        termination,
    })
}

/// Dense problem given by residual and Jacobian closures over a parameter vector.
pub struct DenseProblem<T: Real, R, J> {
    residual_fn: R,
    jacobian_fn: J,
    hessian: DMatrix<T>,
    gradient: DVector<T>,
}

impl<T, R, J> DenseProblem<T, R, J>
where
    T: Real,
    R: FnMut(&DVector<T>) -> DVector<T>,
    J: FnMut(&DVector<T>) -> DMatrix<T>,
{
    pub fn new(residual_fn: R, jacobian_fn: J) -> Self {
        Self {
            residual_fn,
            jacobian_fn,
            hessian: DMatrix::zeros(0, 0),
            gradient: DVector::zeros(0),
        }
    }
}

impl<T, R, J> LmProblem<T> for DenseProblem<T, R, J>
where
    T: Real,
    R: FnMut(&DVector<T>) -> DVector<T>,
    J: FnMut(&DVector<T>) -> DMatrix<T>,
{
    type State = DVector<T>;

    fn cost(&mut self, x: &DVector<T>) -> T {
        let r = (self.residual_fn)(x);
        if r.iter().all(|v| v.is_finite()) {
            r.norm_squared()
        } else {
            T::lit(f64::INFINITY)
        }
    }

    fn linearize(&mut self, x: &DVector<T>) -> Result<T> {
        let r = (self.residual_fn)(x);
        let j = (self.jacobian_fn)(x);
        if j.nrows() != r.len() || j.ncols() != x.len() {
            return Err(Error::DimensionMismatch(format!(
                "jacobian is {}x{}, expected {}x{}",
                j.nrows(),
                j.ncols(),
                r.len(),
                x.len()
            )));
        }
        self.gradient = j.tr_mul(&r);
        self.hessian = j.tr_mul(&j);
        Ok(self.gradient.amax())
    }

    fn solve_damped(&mut self, lambda: T) -> Option<DVector<T>> {
        let mut a = self.hessian.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda * damping_diagonal(self.hessian[(i, i)]);
        }
        let step = a.cholesky()?.solve(&(-&self.gradient));
        step.iter().all(|v| v.is_finite()).then_some(step)
    }

    fn retract(&self, x: &DVector<T>, step: &DVector<T>) -> DVector<T> {
        x + step
    }
}

/// Minimizes `‖r(x)‖²` from `x0` given the residual and its Jacobian.
pub fn levenberg_marquardt<T, R, J>(
    residual_fn: R,
    jacobian_fn: J,
    x0: DVector<T>,
    opts: &LmOptions<T>,
) -> Result<LmReport<DVector<T>, T>>
where
    T: Real,
    R: FnMut(&DVector<T>) -> DVector<T>,
    J: FnMut(&DVector<T>) -> DMatrix<T>,
{
    let mut problem = DenseProblem::new(residual_fn, jacobian_fn);
    let r0 = (problem.residual_fn)(&x0);
    if !r0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("residual at x0"));
    }
    minimize(&mut problem, x0, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_problem_converges_in_two_iterations() {
        let c = DVector::from_vec(vec![1.5, -2.0, 0.25]);
        let cc = c.clone();
        let report = levenberg_marquardt(
            move |x: &DVector<f64>| x - &cc,
            |x: &DVector<f64>| DMatrix::identity(x.len(), x.len()),
            DVector::zeros(3),
            &LmOptions::default(),
        )
        .unwrap();
        assert!(report.iterations <= 2);
        assert!((report.state - c).amax() < 1e-8);
    }

    fn rosenbrock_residual(x: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![1.0 - x[0], 10.0 * (x[1] - x[0] * x[0])])
    }

    fn rosenbrock_jacobian(x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -20.0 * x[0], 10.0])
    }

    #[test]
    fn rosenbrock_minimum() {
        // The valley's small curvature turns a 1e-8 gradient into ~5e-8 of position error.
        let opts = LmOptions {
            gradient_tol: 1e-12,
            ..LmOptions::default()
        };
        let report = levenberg_marquardt(
            rosenbrock_residual,
            rosenbrock_jacobian,
            DVector::from_vec(vec![-1.2, 1.0]),
            &opts,
        )
        .unwrap();
        assert!((report.state[0] - 1.0).abs() < 1e-8);
        assert!((report.state[1] - 1.0).abs() < 1e-8);
        assert!(report.accepted_costs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = levenberg_marquardt(
            |x: &DVector<f64>| x.clone(),
            |_x: &DVector<f64>| DMatrix::identity(2, 3),
            DVector::zeros(3),
            &LmOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn non_finite_start_is_rejected() {
        let err = levenberg_marquardt(
            |x: &DVector<f64>| x.map(|v| 1.0 / v),
            |x: &DVector<f64>| DMatrix::identity(x.len(), x.len()),
            DVector::zeros(2),
            &LmOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn trace_dump_has_one_line_per_attempt() {
        let opts = LmOptions {
            record_trace: true,
            ..Default::default()
        };
        let report = levenberg_marquardt(
            rosenbrock_residual,
            rosenbrock_jacobian,
            DVector::from_vec(vec![-1.2, 1.0]),
            &opts,
        )
        .unwrap();
        let mut buf = Vec::new();
        report.write_trace(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), report.trace.len() + 1);
        assert!(!report.trace.is_empty());
    }
}
