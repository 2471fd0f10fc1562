//! Windowed local bundle adjustment.
//!
//! Mutable keyframe poses and window landmarks are optimized jointly; fixed keyframes
//! anchor the gauge. Reprojection errors `e = x - proj(T, X)` are whitened with the
//! observation's square-root information and robustified with a Huber kernel on the
//! squared whitened norm. The normal equations are reduced onto the pose blocks with a
//! Schur complement over the (block-diagonal) landmark part.

use std::collections::HashMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Matrix3x2, SMatrix, Vector2, Vector3};

use super::lm::{damping_diagonal, minimize, LmOptions, LmProblem, LmReport, LmTraceEntry, Termination};
use crate::error::{Error, Result};
use crate::geometry::{skew, CameraModel, Pose};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyframeRole {
    /// Optimized over all six degrees of freedom.
    Mutable,
    /// Held constant (gauge anchor).
    Fixed,
    /// Optimized with the translation norm frozen; used to pin scale while bootstrapping.
    ScaleFixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowKeyframe<T: Real> {
    pub id: u64,
    pub pose: Pose<T>,
    pub role: KeyframeRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowLandmark<T: Real> {
    pub id: u64,
    pub position: Vector3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowObservation<T: Real> {
    pub keyframe_id: u64,
    pub landmark_id: u64,
    pub pixel: Vector2<T>,
    /// `L` with `LᵀL = Σ⁻¹`.
    pub sqrt_information: Matrix2<T>,
}

impl<T: Real> WindowObservation<T> {
    /// Observation with isotropic covariance `σ² I`.
    pub fn isotropic(keyframe_id: u64, landmark_id: u64, pixel: Vector2<T>, sigma: T) -> Self {
        Self {
            keyframe_id,
            landmark_id,
            pixel,
            sqrt_information: Matrix2::identity() / sigma,
        }
    }
}

/// Parameters of one local bundle adjustment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizationWindow<T: Real> {
    pub keyframes: Vec<WindowKeyframe<T>>,
    pub landmarks: Vec<WindowLandmark<T>>,
    pub observations: Vec<WindowObservation<T>>,
}

impl<T: Real> OptimizationWindow<T> {
    pub fn validate(&self) -> Result<()> {
        let mut kf_ids = HashMap::new();
        for (i, kf) in self.keyframes.iter().enumerate() {
            if kf_ids.insert(kf.id, i).is_some() {
                return Err(Error::InvalidWindow(format!("duplicate keyframe {}", kf.id)));
            }
            if !kf.pose.is_finite() {
                return Err(Error::InvalidWindow(format!("keyframe {} pose not finite", kf.id)));
            }
            if kf.role == KeyframeRole::ScaleFixed && kf.pose.translation.norm() == T::zero() {
                return Err(Error::InvalidWindow(format!(
                    "scale-fixed keyframe {} has zero translation",
                    kf.id
                )));
            }
        }
        let mut lm_ids = HashMap::new();
        for (i, lm) in self.landmarks.iter().enumerate() {
            if lm_ids.insert(lm.id, i).is_some() {
                return Err(Error::InvalidWindow(format!("duplicate landmark {}", lm.id)));
            }
        }
        if !self.keyframes.iter().any(|k| k.role != KeyframeRole::Fixed) {
            return Err(Error::InvalidWindow("no mutable keyframe".into()));
        }
        if !self.keyframes.iter().any(|k| k.role == KeyframeRole::Fixed) {
            return Err(Error::InvalidWindow("no fixed keyframe anchors the gauge".into()));
        }
        for o in &self.observations {
            if !kf_ids.contains_key(&o.keyframe_id) {
                return Err(Error::InvalidWindow(format!(
                    "observation references missing keyframe {}",
                    o.keyframe_id
                )));
            }
            if !lm_ids.contains_key(&o.landmark_id) {
                return Err(Error::InvalidWindow(format!(
                    "observation references missing landmark {}",
                    o.landmark_id
                )));
            }
        }
        Ok(())
    }

    /// Applies a rigid world transform `g` (`x ↦ g x`) to every pose and landmark.
    pub fn transformed(&self, g: &Pose<T>) -> Self {
        let g_inv = g.inverse();
        let mut out = self.clone();
        for kf in &mut out.keyframes {
            kf.pose = kf.pose.compose(&g_inv);
        }
        for lm in &mut out.landmarks {
            lm.position = g.transform_point(&lm.position);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    /// Plain least squares.
    Trivial,
    Huber,
}

/// Robust loss applied to squared whitened residual norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustKernel<T: Real> {
    pub kind: KernelKind,
    pub delta: T,
}

impl<T: Real> RobustKernel<T> {
    pub fn huber(delta: T) -> Result<Self> {
        if !(delta > T::zero()) {
            return Err(Error::InvalidConfig(format!("huber delta must be > 0, got {delta}")));
        }
        Ok(Self {
            kind: KernelKind::Huber,
            delta,
        })
    }

    pub fn trivial() -> Self {
        Self {
            kind: KernelKind::Trivial,
            delta: T::one(),
        }
    }

    /// `ρ(s)`: `s` up to `δ²`, `2δ√s − δ²` beyond.
    pub fn rho(&self, s: T) -> T {
        match self.kind {
            KernelKind::Trivial => s,
            KernelKind::Huber => {
                let d2 = self.delta * self.delta;
                if s <= d2 {
                    s
                } else {
                    T::lit(2.0) * self.delta * s.sqrt() - d2
                }
            }
        }
    }

    /// `ρ'(s)`, the IRLS weight.
    pub fn weight(&self, s: T) -> T {
        match self.kind {
            KernelKind::Trivial => T::one(),
            KernelKind::Huber => {
                if s <= self.delta * self.delta {
                    T::one()
                } else {
                    self.delta / s.sqrt()
                }
            }
        }
    }
}

/// Optimization variables of a window, in window order.
#[derive(Debug, Clone, PartialEq)]
pub struct BaState<T: Real> {
    pub poses: Vec<Pose<T>>,
    pub points: Vec<Vector3<T>>,
}

#[derive(Debug, Clone, Copy)]
struct PoseBlock {
    offset: usize,
    dim: usize,
}

type PoseJacobian<T> = SMatrix<T, 2, 6>;
type CrossBlock<T> = SMatrix<T, 6, 3>;

/// Orthonormal basis of the plane orthogonal to `t`.
fn tangent_basis<T: Real>(t: &Vector3<T>) -> Matrix3x2<T> {
    let n = t.normalize();
    let a = if n.x.abs() < T::lit(0.6) {
        Vector3::x()
    } else if n.y.abs() < T::lit(0.6) {
        Vector3::y()
    } else {
        Vector3::z()
    };
    let b1 = n.cross(&a).normalize();
    let b2 = n.cross(&b1);
    Matrix3x2::from_columns(&[b1, b2])
}

/// The bundle adjustment least-squares problem over one window.
pub struct BaProblem<'a, T: Real> {
    cam: &'a CameraModel<T>,
    kernel: RobustKernel<T>,
    observations: Vec<(usize, usize, Vector2<T>, Matrix2<T>)>,
    blocks: Vec<Option<PoseBlock>>,
    roles: Vec<KeyframeRole>,
    pose_dim: usize,
    n_points: usize,
    hpp: DMatrix<T>,
    gp: DVector<T>,
    hll: Vec<Matrix3<T>>,
    gl: Vec<Vector3<T>>,
    // per landmark: (pose block index, W block rows 0..dim)
    cross: Vec<Vec<(usize, CrossBlock<T>)>>,
}

impl<'a, T: Real> BaProblem<'a, T> {
    pub fn new(
        window: &OptimizationWindow<T>,
        cam: &'a CameraModel<T>,
        kernel: RobustKernel<T>,
    ) -> Result<Self> {
        window.validate()?;
        let kf_index: HashMap<u64, usize> = window
            .keyframes
            .iter()
            .enumerate()
            .map(|(i, k)| (k.id, i))
            .collect();
        let lm_index: HashMap<u64, usize> = window
            .landmarks
            .iter()
            .enumerate()
            .map(|(i, l)| (l.id, i))
            .collect();
        let mut offset = 0;
        let blocks = window
            .keyframes
            .iter()
            .map(|k| {
                let dim = match k.role {
                    KeyframeRole::Fixed => return None,
                    KeyframeRole::Mutable => 6,
                    KeyframeRole::ScaleFixed => 5,
                };
                let b = PoseBlock { offset, dim };
                offset += dim;
                Some(b)
            })
            .collect();
        let observations = window
            .observations
            .iter()
            .map(|o| {
                (
                    kf_index[&o.keyframe_id],
                    lm_index[&o.landmark_id],
                    o.pixel,
                    o.sqrt_information,
                )
            })
            .collect();
        Ok(Self {
            cam,
            kernel,
            observations,
            blocks,
            roles: window.keyframes.iter().map(|k| k.role).collect(),
            pose_dim: offset,
            n_points: window.landmarks.len(),
            hpp: DMatrix::zeros(0, 0),
            gp: DVector::zeros(0),
            hll: Vec::new(),
            gl: Vec::new(),
            cross: Vec::new(),
        })
    }

    pub fn initial_state(window: &OptimizationWindow<T>) -> BaState<T> {
        BaState {
            poses: window.keyframes.iter().map(|k| k.pose).collect(),
            points: window.landmarks.iter().map(|l| l.position).collect(),
        }
    }

    /// Number of optimized parameters (pose blocks first, then 3 per landmark).
    pub fn num_parameters(&self) -> usize {
        self.pose_dim + 3 * self.n_points
    }

    pub fn num_observations(&self) -> usize {
        self.observations.len()
    }

    /// Whitened residual of one observation and its Jacobians with respect to the full
    /// 6-dof pose increment and the landmark. `None` when the point is not in front.
    fn observation_terms(
        &self,
        state: &BaState<T>,
        obs: usize,
    ) -> Option<(Vector2<T>, PoseJacobian<T>, Matrix2x3<T>)> {
        let (k, l, pixel, sqrt_info) = &self.observations[obs];
        let pose = &state.poses[*k];
        let pc = pose.transform_point(&state.points[*l]);
        if !(pc.z > T::zero()) {
            return None;
        }
        let iz = T::one() / pc.z;
        let (fx, fy) = (self.cam.fx, self.cam.fy);
        let proj = Vector2::new(fx * pc.x * iz + self.cam.cx, fy * pc.y * iz + self.cam.cy);
        let r = sqrt_info * (pixel - proj);
        let jpi = Matrix2x3::new(
            fx * iz,
            T::zero(),
            -fx * pc.x * iz * iz,
            T::zero(),
            fy * iz,
            -fy * pc.y * iz * iz,
        );
        let de_dpc = -(sqrt_info * jpi);
        let mut jpose = PoseJacobian::zeros();
        jpose
            .fixed_view_mut::<2, 3>(0, 0)
            .copy_from(&(de_dpc * (-skew(&pc))));
        jpose.fixed_view_mut::<2, 3>(0, 3).copy_from(&de_dpc);
        let jpoint = de_dpc * pose.rotation_matrix();
        Some((r, jpose, jpoint))
    }

    /// Restricts a 6-dof pose Jacobian to the block's parameterization.
    fn reduce_pose_jacobian(&self, state: &BaState<T>, k: usize, j: &PoseJacobian<T>) -> PoseJacobian<T> {
        if self.roles[k] != KeyframeRole::ScaleFixed {
            return *j;
        }
        let b = tangent_basis(&state.poses[k].translation);
        let mut out = PoseJacobian::zeros();
        out.fixed_view_mut::<2, 3>(0, 0).copy_from(&j.fixed_view::<2, 3>(0, 0));
        out.fixed_view_mut::<2, 2>(0, 3)
            .copy_from(&(j.fixed_view::<2, 3>(0, 3) * b));
        out
    }

    /// Whitened (non-robustified) residual vector, two rows per observation.
    pub fn residuals(&self, state: &BaState<T>) -> Option<DVector<T>> {
        let mut r = DVector::zeros(2 * self.observations.len());
        for i in 0..self.observations.len() {
            let (ri, _, _) = self.observation_terms(state, i)?;
            r.fixed_rows_mut::<2>(2 * i).copy_from(&ri);
        }
        Some(r)
    }

    /// Dense Jacobian of [`Self::residuals`] in the optimizer's parameterization.
    pub fn jacobian_dense(&self, state: &BaState<T>) -> Option<DMatrix<T>> {
        let mut j = DMatrix::zeros(2 * self.observations.len(), self.num_parameters());
        for i in 0..self.observations.len() {
            let (k, l, _, _) = self.observations[i];
            let (_, jp, jl) = self.observation_terms(state, i)?;
            if let Some(b) = self.blocks[k] {
                let jr = self.reduce_pose_jacobian(state, k, &jp);
                for c in 0..b.dim {
                    j[(2 * i, b.offset + c)] = jr[(0, c)];
                    j[(2 * i + 1, b.offset + c)] = jr[(1, c)];
                }
            }
            let off = self.pose_dim + 3 * l;
            j.view_mut((2 * i, off), (2, 3)).copy_from(&jl);
        }
        Some(j)
    }

    /// Unwhitened reprojection RMSE in pixels.
    pub fn pixel_rmse(&self, state: &BaState<T>) -> T {
        if self.observations.is_empty() {
            return T::zero();
        }
        let mut acc = T::zero();
        for (k, l, pixel, _) in &self.observations {
            let pc = state.poses[*k].transform_point(&state.points[*l]);
            match self.cam.project_camera(&pc) {
                Ok(p) => acc += (pixel - p).norm_squared(),
                Err(_) => return T::lit(f64::INFINITY),
            }
        }
        (acc / T::lit(self.observations.len() as f64)).sqrt()
    }

    /// Undamped-plus-`λ` system solved densely; used to cross-check the Schur path.
    pub fn solve_dense(&self, lambda: T) -> Option<DVector<T>> {
        let p = self.pose_dim;
        let n = self.num_parameters();
        let mut h = DMatrix::zeros(n, n);
        let mut g = DVector::zeros(n);
        h.view_mut((0, 0), (p, p)).copy_from(&self.hpp);
        g.rows_mut(0, p).copy_from(&self.gp);
        for l in 0..self.n_points {
            let off = p + 3 * l;
            h.view_mut((off, off), (3, 3)).copy_from(&self.hll[l]);
            g.fixed_rows_mut::<3>(off).copy_from(&self.gl[l]);
            for (bi, w) in &self.cross[l] {
                let b = self.blocks_by_index(*bi);
                for r in 0..b.dim {
                    for c in 0..3 {
                        h[(b.offset + r, off + c)] += w[(r, c)];
                        h[(off + c, b.offset + r)] += w[(r, c)];
                    }
                }
            }
        }
        for i in 0..n {
            let d = damping_diagonal(h[(i, i)]);
            h[(i, i)] += lambda * d;
        }
        let step = h.cholesky()?.solve(&(-g));
        step.iter().all(|v| v.is_finite()).then_some(step)
    }

    fn blocks_by_index(&self, k: usize) -> PoseBlock {
        self.blocks[k].expect("cross block on a fixed keyframe")
    }

    /// Schur-complement solve of the damped normal equations.
    pub fn solve_schur(&self, lambda: T) -> Option<DVector<T>> {
        let p = self.pose_dim;
        let mut s = self.hpp.clone();
        for i in 0..p {
            s[(i, i)] += lambda * damping_diagonal(self.hpp[(i, i)]);
        }
        let mut rhs = -&self.gp;
        let mut c_inv = Vec::with_capacity(self.n_points);
        for l in 0..self.n_points {
            let mut c = self.hll[l];
            for i in 0..3 {
                c[(i, i)] += lambda * damping_diagonal(self.hll[l][(i, i)]);
            }
            let ci = c.cholesky()?.inverse();
            let blocks = &self.cross[l];
            for (ai, wa) in blocks {
                let ba = self.blocks_by_index(*ai);
                let wa_ci = wa * ci;
                let contrib = wa_ci * self.gl[l];
                for r in 0..ba.dim {
                    rhs[ba.offset + r] += contrib[r];
                }
                for (bi, wb) in blocks {
                    let bb = self.blocks_by_index(*bi);
                    let m = wa_ci * wb.transpose();
                    for r in 0..ba.dim {
                        for c in 0..bb.dim {
                            s[(ba.offset + r, bb.offset + c)] -= m[(r, c)];
                        }
                    }
                }
            }
            c_inv.push(ci);
        }
        let dp = if p > 0 {
            let dp = s.cholesky()?.solve(&rhs);
            if !dp.iter().all(|v| v.is_finite()) {
                return None;
            }
            dp
        } else {
            DVector::zeros(0)
        };
        let mut step = DVector::zeros(self.num_parameters());
        step.rows_mut(0, p).copy_from(&dp);
        for l in 0..self.n_points {
            let mut b = -self.gl[l];
            for (ai, wa) in &self.cross[l] {
                let ba = self.blocks_by_index(*ai);
                for r in 0..ba.dim {
                    let row = wa.row(r).transpose();
                    b -= row * dp[ba.offset + r];
                }
            }
            let dl = c_inv[l] * b;
            step.fixed_rows_mut::<3>(p + 3 * l).copy_from(&dl);
        }
        step.iter().all(|v| v.is_finite()).then_some(step)
    }
}

impl<T: Real> LmProblem<T> for BaProblem<'_, T> {
    type State = BaState<T>;

    fn cost(&mut self, state: &BaState<T>) -> T {
        let mut cost = T::zero();
        for i in 0..self.observations.len() {
            let (k, l, pixel, sqrt_info) = &self.observations[i];
            let pc = state.poses[*k].transform_point(&state.points[*l]);
            let Ok(p) = self.cam.project_camera(&pc) else {
                return T::lit(f64::INFINITY);
            };
            cost += self.kernel.rho((sqrt_info * (pixel - p)).norm_squared());
        }
        cost
    }

    fn linearize(&mut self, state: &BaState<T>) -> Result<T> {
        let p = self.pose_dim;
        self.hpp = DMatrix::zeros(p, p);
        self.gp = DVector::zeros(p);
        self.hll = vec![Matrix3::zeros(); self.n_points];
        self.gl = vec![Vector3::zeros(); self.n_points];
        self.cross = vec![Vec::new(); self.n_points];
        for i in 0..self.observations.len() {
            let (k, l, _, _) = self.observations[i];
            let (r, jp, jl) = self
                .observation_terms(state, i)
                .ok_or(Error::NonFinite("point behind camera during linearization"))?;
            let w = self.kernel.weight(r.norm_squared());
            self.hll[l] += jl.transpose() * jl * w;
            self.gl[l] += jl.transpose() * r * w;
            if let Some(b) = self.blocks[k] {
                let jr = self.reduce_pose_jacobian(state, k, &jp);
                let jtj = jr.transpose() * jr * w;
                let jtr = jr.transpose() * r * w;
                for a in 0..b.dim {
                    self.gp[b.offset + a] += jtr[a];
                    for c in 0..b.dim {
                        self.hpp[(b.offset + a, b.offset + c)] += jtj[(a, c)];
                    }
                }
                let wkl: CrossBlock<T> = jr.transpose() * jl * w;
                self.cross[l].push((k, wkl));
            }
        }
        let g = self
            .gp
            .iter()
            .chain(self.gl.iter().flat_map(|v| v.iter()))
            .fold(T::zero(), |m, v| m.max(v.abs()));
        Ok(g)
    }

    fn solve_damped(&mut self, lambda: T) -> Option<DVector<T>> {
        self.solve_schur(lambda)
    }

    fn retract(&self, state: &BaState<T>, step: &DVector<T>) -> BaState<T> {
        let mut next = state.clone();
        for (k, block) in self.blocks.iter().enumerate() {
            let Some(b) = block else { continue };
            let pose = &state.poses[k];
            let omega = Vector3::new(step[b.offset], step[b.offset + 1], step[b.offset + 2]);
            next.poses[k] = if b.dim == 6 {
                let v = Vector3::new(step[b.offset + 3], step[b.offset + 4], step[b.offset + 5]);
                pose.retract(&omega, &v)
            } else {
                let basis = tangent_basis(&pose.translation);
                let v = basis * nalgebra::Vector2::new(step[b.offset + 3], step[b.offset + 4]);
                let mut moved = pose.retract(&omega, &v);
                let norm = pose.translation.norm();
                moved.translation *= norm / moved.translation.norm();
                moved
            };
        }
        for l in 0..self.n_points {
            let off = self.pose_dim + 3 * l;
            next.points[l] += Vector3::new(step[off], step[off + 1], step[off + 2]);
        }
        next
    }
}

#[derive(Debug, Clone)]
pub struct BaStats<T: Real> {
    /// Robust RMSE `sqrt(Σρ / n_obs)` before and after; equals the whitened reprojection
    /// RMSE when every residual is inside the Huber knee.
    pub initial_rmse: T,
    pub final_rmse: T,
    /// Plain reprojection RMSE in pixels.
    pub initial_pixel_rmse: T,
    pub final_pixel_rmse: T,
    pub initial_cost: T,
    pub final_cost: T,
    pub iterations: usize,
    pub accepted_costs: Vec<T>,
    pub trace: Vec<LmTraceEntry<T>>,
    pub termination: Termination,
}

impl<T: Real> BaStats<T> {
    pub fn write_trace(&self, out: impl Write) -> std::io::Result<()> {
        LmReport {
            state: (),
            initial_cost: self.initial_cost,
            final_cost: self.final_cost,
            iterations: self.iterations,
            accepted_costs: self.accepted_costs.clone(),
            trace: self.trace.clone(),
            termination: self.termination,
        }
        .write_trace(out)
    }
}

/// Default LM settings for bundle adjustment.
pub fn default_ba_options<T: Real>() -> LmOptions<T> {
    LmOptions {
        max_iters: 30,
        ..LmOptions::default()
    }
}

/// Optimizes a window snapshot and returns the updated window with statistics.
pub fn local_bundle_adjust<T: Real>(
    window: &OptimizationWindow<T>,
    cam: &CameraModel<T>,
    kernel: RobustKernel<T>,
    opts: &LmOptions<T>,
) -> Result<(OptimizationWindow<T>, BaStats<T>)> {
    let mut problem = BaProblem::new(window, cam, kernel)?;
    let x0 = BaProblem::initial_state(window);
    let initial_pixel_rmse = problem.pixel_rmse(&x0);
    let report = minimize(&mut problem, x0, opts)?;
    if !report.final_cost.is_finite() {
        return Err(Error::NonFinite("bundle adjustment cost"));
    }
    let n = T::lit(problem.num_observations().max(1) as f64);
    let final_pixel_rmse = problem.pixel_rmse(&report.state);
    let mut out = window.clone();
    for (kf, pose) in out.keyframes.iter_mut().zip(&report.state.poses) {
        kf.pose = *pose;
    }
    for (lm, p) in out.landmarks.iter_mut().zip(&report.state.points) {
        lm.position = *p;
    }
    let stats = BaStats {
        initial_rmse: (report.initial_cost / n).sqrt(),
        final_rmse: (report.final_cost / n).sqrt(),
        initial_pixel_rmse,
        final_pixel_rmse,
        initial_cost: report.initial_cost,
        final_cost: report.final_cost,
        iterations: report.iterations,
        accepted_costs: report.accepted_costs,
        trace: report.trace,
        termination: report.termination,
    };
    Ok((out, stats))
}

/// Removes every landmark with a reprojection error above `threshold` pixels in any
/// observation, or with fewer than two observations left in the window. Returns the
/// culled landmark ids in window order.
pub fn cull_outliers<T: Real>(
    window: &mut OptimizationWindow<T>,
    cam: &CameraModel<T>,
    threshold: T,
) -> Vec<u64> {
    let poses: HashMap<u64, Pose<T>> = window.keyframes.iter().map(|k| (k.id, k.pose)).collect();
    let positions: HashMap<u64, Vector3<T>> = window
        .landmarks
        .iter()
        .map(|l| (l.id, l.position))
        .collect();
    let mut bad: HashMap<u64, bool> = HashMap::new();
    let mut counts: HashMap<u64, usize> = HashMap::new();
    for o in &window.observations {
        *counts.entry(o.landmark_id).or_default() += 1;
        let (Some(pose), Some(x)) = (poses.get(&o.keyframe_id), positions.get(&o.landmark_id)) else {
            continue;
        };
        let err = match cam.project(pose, x) {
            Ok(p) => (o.pixel - p).norm(),
            Err(_) => T::lit(f64::INFINITY),
        };
        if err > threshold {
            bad.insert(o.landmark_id, true);
        }
    }
    let culled: Vec<u64> = window
        .landmarks
        .iter()
        .filter(|l| bad.contains_key(&l.id) || counts.get(&l.id).copied().unwrap_or(0) < 2)
        .map(|l| l.id)
        .collect();
    window.landmarks.retain(|l| !culled.contains(&l.id));
    window
        .observations
        .retain(|o| !culled.contains(&o.landmark_id));
    culled
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{perturb_window, window_fixture};
    use nalgebra::UnitQuaternion;

    fn huber() -> RobustKernel<f64> {
        RobustKernel::huber(2.0).unwrap()
    }

    fn max_landmark_error(a: &OptimizationWindow<f64>, b: &OptimizationWindow<f64>) -> f64 {
        a.landmarks
            .iter()
            .zip(&b.landmarks)
            .map(|(x, y)| (x.position - y.position).norm())
            .fold(0.0, f64::max)
    }

    fn max_pose_error(a: &OptimizationWindow<f64>, b: &OptimizationWindow<f64>) -> f64 {
        a.keyframes
            .iter()
            .zip(&b.keyframes)
            .map(|(x, y)| {
                let (r, t) = x.pose.distance(&y.pose);
                r.max(t)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn huber_matches_definition_and_is_c1_at_knee() {
        let k = huber();
        let d2 = 4.0;
        assert_eq!(k.rho(1.5), 1.5);
        assert!((k.rho(9.0) - (2.0 * 2.0 * 3.0 - d2)).abs() < 1e-15);
        let eps = 1e-7;
        assert!((k.rho(d2 - eps) - k.rho(d2 + eps)).abs() < 1e-6);
        let left = (k.rho(d2) - k.rho(d2 - eps)) / eps;
        let right = (k.rho(d2 + eps) - k.rho(d2)) / eps;
        assert!((left - right).abs() < 1e-6, "{left} {right}");
        assert!((k.weight(d2 + eps) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn huber_delta_must_be_positive() {
        assert!(matches!(RobustKernel::<f64>::huber(0.0), Err(Error::InvalidConfig(_))));
        assert!(matches!(RobustKernel::<f64>::huber(-1.0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn noiseless_window_is_unchanged() {
        let fx = window_fixture(1, 5, 40, 2, 0.0);
        let (out, stats) = local_bundle_adjust(&fx.window, &fx.cam, huber(), &default_ba_options()).unwrap();
        assert!(max_landmark_error(&out, &fx.window) < 1e-10);
        assert!(max_pose_error(&out, &fx.window) < 1e-10);
        assert!(stats.final_pixel_rmse < 1e-10);
    }

    #[test]
    fn perturbed_landmarks_are_recovered() {
        let fx = window_fixture(2, 5, 40, 2, 0.0);
        let start = perturb_window(&fx.window, 3, 0.05, 0.0, 0.0);
        let (out, stats) = local_bundle_adjust(&start, &fx.cam, huber(), &default_ba_options()).unwrap();
        assert!(max_landmark_error(&out, &fx.window) < 1e-6);
        assert!(max_pose_error(&out, &fx.window) < 1e-6);
        assert!(stats.final_pixel_rmse < 1e-8);
        assert!(stats.final_rmse <= stats.initial_rmse);
        assert!(stats.accepted_costs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn schur_solve_matches_dense_solve() {
        for seed in 0..5 {
            let fx = window_fixture(10 + seed, 5, 50, 1, 0.5);
            let mut w = perturb_window(&fx.window, 20 + seed, 0.05, 0.01, 0.02);
            w.keyframes[1].role = KeyframeRole::ScaleFixed;
            let mut p = BaProblem::new(&w, &fx.cam, huber()).unwrap();
            let x = BaProblem::initial_state(&w);
            p.linearize(&x).unwrap();
            for lambda in [0.0, 1e-4, 1.0] {
                let a = p.solve_schur(lambda).unwrap();
                let b = p.solve_dense(lambda).unwrap();
                let rel = (&a - &b).amax() / b.amax();
                assert!(rel < 1e-9, "seed {seed} lambda {lambda}: {rel}");
            }
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for seed in 0..100 {
            let fx = window_fixture(100 + seed, 3, 8, 1, 0.5);
            let mut w = perturb_window(&fx.window, 200 + seed, 0.05, 0.02, 0.05);
            w.keyframes[1].role = KeyframeRole::ScaleFixed;
            let p = BaProblem::new(&w, &fx.cam, RobustKernel::trivial()).unwrap();
            let x = BaProblem::initial_state(&w);
            let j = p.jacobian_dense(&x).unwrap();
            for c in 0..p.num_parameters() {
                let mut step = DVector::zeros(p.num_parameters());
                step[c] = h;
                let plus = p.residuals(&p.retract(&x, &step)).unwrap();
                step[c] = -h;
                let minus = p.residuals(&p.retract(&x, &step)).unwrap();
                let fd = (plus - minus) / (2.0 * h);
                let err = (j.column(c) - &fd).norm() / fd.norm().max(1e-3);
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn huber_bounds_outlier_influence() {
        let fx = window_fixture(5, 5, 40, 2, 0.5);
        let start = perturb_window(&fx.window, 6, 0.05, 0.01, 0.02);
        let opts = default_ba_options();
        let error = |w: &OptimizationWindow<f64>| max_landmark_error(w, &fx.window).max(max_pose_error(w, &fx.window));

        let (clean, _) = local_bundle_adjust(&start, &fx.cam, huber(), &opts).unwrap();
        let base = error(&clean);

        let mut corrupted = start.clone();
        let target = corrupted
            .observations
            .iter()
            .position(|o| o.keyframe_id == 4)
            .unwrap();
        corrupted.observations[target].pixel.x += 50.0;
        let (robust, _) = local_bundle_adjust(&corrupted, &fx.cam, huber(), &opts).unwrap();
        let (plain, _) = local_bundle_adjust(&corrupted, &fx.cam, RobustKernel::trivial(), &opts).unwrap();
        let robust_err = error(&robust);
        let plain_err = error(&plain);
        assert!(robust_err <= 3.0 * base, "robust {robust_err} base {base}");
        assert!(plain_err > robust_err, "plain {plain_err} robust {robust_err}");
    }

    #[test]
    fn rigid_transform_of_inputs_transforms_outputs() {
        let fx = window_fixture(7, 5, 40, 2, 0.5);
        let start = perturb_window(&fx.window, 8, 0.05, 0.01, 0.02);
        let g = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::new(0.3, -0.2, 0.5)),
            Vector3::new(1.0, -2.0, 0.5),
        );
        let opts = LmOptions {
            gradient_tol: 1e-12,
            ..default_ba_options()
        };
        let (a, _) = local_bundle_adjust(&start, &fx.cam, huber(), &opts).unwrap();
        let (b, _) = local_bundle_adjust(&start.transformed(&g), &fx.cam, huber(), &opts).unwrap();
        let a_moved = a.transformed(&g);
        assert!(max_landmark_error(&a_moved, &b) < 1e-8);
        assert!(max_pose_error(&a_moved, &b) < 1e-8);
    }

    #[test]
    fn scale_fixed_keyframe_keeps_translation_norm() {
        let fx = window_fixture(9, 4, 40, 1, 0.5);
        let mut w = fx.window.clone();
        w.keyframes[1].role = KeyframeRole::ScaleFixed;
        let norm = w.keyframes[1].pose.translation.norm();
        let start = perturb_window(&w, 10, 0.05, 0.01, 0.02);
        let (out, stats) = local_bundle_adjust(&start, &fx.cam, huber(), &default_ba_options()).unwrap();
        assert!((out.keyframes[1].pose.translation.norm() - norm).abs() < 1e-12);
        assert!(stats.final_pixel_rmse < stats.initial_pixel_rmse);
        assert_eq!(out.keyframes[0].pose, w.keyframes[0].pose);
    }

    #[test]
    fn invalid_windows_are_rejected() {
        let fx = window_fixture(11, 3, 20, 1, 0.0);
        let mut w = fx.window.clone();
        w.observations[0].landmark_id = 9999;
        assert!(matches!(w.validate(), Err(Error::InvalidWindow(_))));
        let mut w = fx.window.clone();
        for k in &mut w.keyframes {
            k.role = KeyframeRole::Mutable;
        }
        assert!(matches!(w.validate(), Err(Error::InvalidWindow(_))));
        let mut w = fx.window.clone();
        for k in &mut w.keyframes {
            k.role = KeyframeRole::Fixed;
        }
        assert!(matches!(w.validate(), Err(Error::InvalidWindow(_))));
    }

    #[test]
    fn cull_on_clean_window_is_empty() {
        let fx = window_fixture(12, 5, 40, 2, 0.0);
        let mut w = fx.window.clone();
        assert!(cull_outliers(&mut w, &fx.cam, 3.0).is_empty());
        assert!(cull_outliers(&mut w, &fx.cam, f64::INFINITY).is_empty());
        assert_eq!(w, fx.window);
    }

    #[test]
    fn cull_removes_planted_outlier_only() {
        let fx = window_fixture(13, 5, 40, 2, 0.0);
        let mut w = fx.window.clone();
        let planted = w.observations[17].landmark_id;
        w.observations[17].pixel += Vector2::new(6.0, 8.0);
        let culled = cull_outliers(&mut w, &fx.cam, 3.0);
        assert_eq!(culled, vec![planted]);
        assert!(w.landmarks.iter().all(|l| l.id != planted));
        assert!(w.observations.iter().all(|o| o.landmark_id != planted));
        assert_eq!(w.landmarks.len(), fx.window.landmarks.len() - 1);
    }

    #[test]
    fn cull_drops_single_observation_landmarks() {
        let fx = window_fixture(14, 5, 40, 2, 0.0);
        let mut w = fx.window.clone();
        let id = w.landmarks[0].id;
        let first = w.observations.iter().position(|o| o.landmark_id == id).unwrap();
        let keep = w.observations[first].clone();
        w.observations.retain(|o| o.landmark_id != id);
        w.observations.push(keep);
        assert_eq!(cull_outliers(&mut w, &fx.cam, f64::INFINITY), vec![id]);
    }
}
