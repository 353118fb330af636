use nalgebra::{DMatrixView, DVector};

use super::dynamics::{Bound, Linearization, ParametricDynamics};
use super::loss::TrajectoryLoss;
use crate::error::{Error, Result};
use crate::ode::{solve, solve_dense, DenseStep, Method, OdeSystem, SolverConfig, Trajectory};

/// How the loss gradient is obtained.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum GradientMethod {
    /// Fixed-step RK4 rollout, reverse pass through every stage.
    DiscretizeBackprop { h: f64 },
    /// Sensitivity equations integrated alongside the state.
    ForwardSensitivity,
    /// Backward adjoint over a dense forward solution. Event-free only.
    BackwardAdjoint,
    /// Central differences over the whole loss.
    FiniteDifference { h_rel: f64 },
}

impl Default for GradientMethod {
    fn default() -> Self {
        GradientMethod::DiscretizeBackprop { h: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

/// Problem data shared by all methods.
#[derive(Debug, Clone, Copy)]
pub struct GradientProblem<'a, L: ?Sized> {
    pub x0: &'a [f64],
    pub t0: f64,
    pub loss: &'a L,
    /// Solver for the adaptive methods and the loss evaluations of the
    /// finite-difference oracle.
    pub solver: &'a SolverConfig,
}

impl<L: TrajectoryLoss + ?Sized> GradientProblem<'_, L> {
    fn times(&self) -> &[f64] {
        self.loss.sample_times()
    }

    fn t_end(&self) -> f64 {
        self.times().last().copied().unwrap_or(self.t0)
    }

    fn check<D: ParametricDynamics + ?Sized>(&self, dynamics: &D, p: &[f64]) -> Result<()> {
        if self.x0.len() != dynamics.dim() {
            return Err(Error::Dimension {
                context: "initial state",
                expected: dynamics.dim(),
                got: self.x0.len(),
            });
        }
        if p.len() != dynamics.n_params() {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: dynamics.n_params(),
                got: p.len(),
            });
        }
        if self.times().first().is_some_and(|&t| t < self.t0) {
            return Err(Error::InvalidArgument("sample before the initial time".into()));
        }
        Ok(())
    }
}

/// States at the sample times; samples at `t0` are the initial state.
pub fn rollout<D, L>(
    dynamics: &mut D,
    p: &[f64],
    problem: &GradientProblem<'_, L>,
    solver: &SolverConfig,
) -> Result<Trajectory>
where
    D: ParametricDynamics + ?Sized,
    L: TrajectoryLoss + ?Sized,
{
    problem.check(dynamics, p)?;
    let times = problem.times();
    if times.is_empty() {
        return Ok(Trajectory::default());
    }
    if problem.t_end() <= problem.t0 {
        return Ok(Trajectory {
            times: times.to_vec(),
            states: vec![problem.x0.to_vec(); times.len()],
            ..Default::default()
        });
    }
    let mut sys = Bound::new(dynamics, p)?;
    solve(&mut sys, problem.x0, (problem.t0, problem.t_end()), solver, Some(times))
}

pub fn loss_value<D, L>(dynamics: &mut D, p: &[f64], problem: &GradientProblem<'_, L>) -> Result<f64>
where
    D: ParametricDynamics + ?Sized,
    L: TrajectoryLoss + ?Sized,
{
    if problem.times().is_empty() {
        return Ok(0.0);
    }
    let traj = rollout(dynamics, p, problem, problem.solver)?;
    problem.loss.value(&traj.states)
}

pub fn loss_gradient<D, L>(
    method: GradientMethod,
    dynamics: &mut D,
    p: &[f64],
    problem: &GradientProblem<'_, L>,
) -> Result<LossGradient>
where
    D: ParametricDynamics + ?Sized,
    L: TrajectoryLoss + ?Sized,
{
    match method {
        GradientMethod::DiscretizeBackprop { h } => grad_discretize_backprop(dynamics, p, problem, h),
        GradientMethod::ForwardSensitivity => grad_forward_sensitivity(dynamics, p, problem),
        GradientMethod::BackwardAdjoint => grad_backward_adjoint(dynamics, p, problem),
        GradientMethod::FiniteDifference { h_rel } => {
            let loss = loss_value(dynamics, p, problem)?;
            let gradient = finite_difference_gradient(|q| loss_value(dynamics, q, problem), p, h_rel)?;
            Ok(LossGradient { loss, gradient })
        }
    }
}

fn zero_gradient(np: usize) -> LossGradient {
    LossGradient {
        loss: 0.0,
        gradient: vec![0.0; np],
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

struct RkStep {
    stages: [Linearization; 4],
}

/// Step index of every sample on the grid `t0 + k·h`.
fn grid_indices(times: &[f64], t0: f64, h: f64) -> Result<Vec<usize>> {
    times
        .iter()
        .map(|&t| {
            let k = ((t - t0) / h).round();
            if (t0 + k * h - t).abs() > 1e-9 * h.max(t.abs() * h) + 1e-12 * t.abs().max(1.0) {
                Err(Error::InvalidArgument(format!(
                    "sample time {t} is not on the step grid (h = {h})"
                )))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

/// Loss gradient through a fixed-step RK4 rollout. Events detected at step
/// ends are applied there and treated as identity in the reverse pass.
pub fn grad_discretize_backprop<D, L>(
    dynamics: &mut D,
    p: &[f64],
    problem: &GradientProblem<'_, L>,
    h: f64,
) -> Result<LossGradient>
where
    D: ParametricDynamics + ?Sized,
    L: TrajectoryLoss + ?Sized,
{
    problem.check(dynamics, p)?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let np = p.len();
    let times = problem.times();
    if times.is_empty() {
        return Ok(zero_gradient(np));
    }
    let n = dynamics.dim();
    let idx = grid_indices(times, problem.t0, h)?;
    let n_steps = *idx.last().unwrap();
    let n_ev = dynamics.n_events();

    let mut xs = Vec::with_capacity(n_steps + 1);
    let mut steps = Vec::with_capacity(n_steps);
    let mut x = problem.x0.to_vec();
    let mut z_old = vec![0.0; n_ev];
    let mut z_new = vec![0.0; n_ev];
    if n_ev > 0 {
        dynamics.event_indicators(problem.t0, &x, p, &mut z_old)?;
    }
    xs.push(x.clone());
    let mut probe = vec![0.0; n];
    for i in 0..n_steps {
        let t = problem.t0 + i as f64 * h;
        let l1 = dynamics.linearize(t, &x, p)?;
        probe.copy_from_slice(&x);
        axpy(&mut probe, 0.5 * h, &l1.f);
        let l2 = dynamics.linearize(t + 0.5 * h, &probe, p)?;
        probe.copy_from_slice(&x);
        axpy(&mut probe, 0.5 * h, &l2.f);
        let l3 = dynamics.linearize(t + 0.5 * h, &probe, p)?;
        probe.copy_from_slice(&x);
        axpy(&mut probe, h, &l3.f);
        let l4 = dynamics.linearize(t + h, &probe, p)?;
        for r in 0..n {
            x[r] += h / 6.0 * (l1.f[r] + 2.0 * l2.f[r] + 2.0 * l3.f[r] + l4.f[r]);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("RK4 rollout state"));
        }
        if n_ev > 0 {
            let t_next = problem.t0 + (i + 1) as f64 * h;
            dynamics.event_indicators(t_next, &x, p, &mut z_new)?;
            if z_old.iter().zip(&z_new).any(|(a, b)| (*a < 0.0) != (*b < 0.0)) {
                dynamics.handle_event(t_next, &mut x, p)?;
                dynamics.event_indicators(t_next, &x, p, &mut z_new)?;
            }
            std::mem::swap(&mut z_old, &mut z_new);
        }
        steps.push(RkStep {
            stages: [l1, l2, l3, l4],
        });
        xs.push(x.clone());
    }

    let states: Vec<Vec<f64>> = idx.iter().map(|&k| xs[k].clone()).collect();
    let loss = problem.loss.value(&states)?;
    let dl = problem.loss.gradient(&states)?;
    let mut seed = vec![vec![0.0; n]; n_steps + 1];
    for (&k, g) in idx.iter().zip(&dl) {
        axpy(&mut seed[k], 1.0, g);
    }

    let mut grad = vec![0.0; np];
    let mut abar = seed[n_steps].clone();
    for i in (0..n_steps).rev() {
        let [l1, l2, l3, l4] = &steps[i].stages;
        let mut xbar = abar.clone();
        let mut k3bar: Vec<f64> = abar.iter().map(|a| h / 3.0 * a).collect();
        let mut k2bar = k3bar.clone();
        let mut k1bar: Vec<f64> = abar.iter().map(|a| h / 6.0 * a).collect();
        let k4bar = k1bar.clone();

        let (z, g) = l4.pullback(&k4bar);
        axpy(&mut xbar, 1.0, &z);
        axpy(&mut k3bar, h, &z);
        axpy(&mut grad, 1.0, &g);
        let (z, g) = l3.pullback(&k3bar);
        axpy(&mut xbar, 1.0, &z);
        axpy(&mut k2bar, 0.5 * h, &z);
        axpy(&mut grad, 1.0, &g);
        let (z, g) = l2.pullback(&k2bar);
        axpy(&mut xbar, 1.0, &z);
        axpy(&mut k1bar, 0.5 * h, &z);
        axpy(&mut grad, 1.0, &g);
        let (z, g) = l1.pullback(&k1bar);
        axpy(&mut xbar, 1.0, &z);
        axpy(&mut grad, 1.0, &g);

        axpy(&mut xbar, 1.0, &seed[i]);
        abar = xbar;
    }
    Ok(LossGradient { loss, gradient: grad })
}

/// State augmented with `S = ∂x/∂p` (column-major, one column per parameter).
pub struct ForwardSensitivitySystem<'a, D: ?Sized> {
    dynamics: &'a mut D,
    p: &'a [f64],
    n: usize,
}

impl<'a, D: ParametricDynamics + ?Sized> ForwardSensitivitySystem<'a, D> {
    pub fn new(dynamics: &'a mut D, p: &'a [f64]) -> Self {
        let n = dynamics.dim();
        Self { dynamics, p, n }
    }

    pub fn initial_state(&self, x0: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        y[..self.n].copy_from_slice(x0);
        y
    }
}

impl<D: ParametricDynamics + ?Sized> OdeSystem for ForwardSensitivitySystem<'_, D> {
    fn dim(&self) -> usize {
        (1 + self.p.len()) * self.n
    }

    fn rhs(&mut self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let (n, np) = (self.n, self.p.len());
        let lin = self.dynamics.linearize(t, &y[..n], self.p)?;
        dy[..n].copy_from_slice(&lin.f);
        let s = DMatrixView::from_slice(&y[n..], n, np);
        let ds = &lin.jx * s + &lin.jp;
        dy[n..].copy_from_slice(ds.as_slice());
        Ok(())
    }

    fn n_events(&self) -> usize {
        self.dynamics.n_events()
    }

    fn event_indicators(&mut self, t: f64, y: &[f64], z: &mut [f64]) -> Result<()> {
        self.dynamics.event_indicators(t, &y[..self.n], self.p, z)
    }

    fn handle_event(&mut self, t: f64, y: &mut [f64]) -> Result<()> {
        self.dynamics.handle_event(t, &mut y[..self.n], self.p)
    }
}

pub fn grad_forward_sensitivity<D, L>(
    dynamics: &mut D,
    p: &[f64],
    problem: &GradientProblem<'_, L>,
) -> Result<LossGradient>
where
    D: ParametricDynamics + ?Sized,
    L: TrajectoryLoss + ?Sized,
{
    problem.check(dynamics, p)?;
    let (n, np) = (dynamics.dim(), p.len());
    if problem.times().is_empty() {
        return Ok(zero_gradient(np));
    }
    if np > 10 * n {
        log::warn!(
            "forward sensitivities with {np} parameters integrate {} equations",
            (1 + np) * n
        );
    }
    let mut sys = ForwardSensitivitySystem::new(dynamics, p);
    let y0 = sys.initial_state(problem.x0);
    let traj = if problem.t_end() > problem.t0 {
        solve(
            &mut sys,
            &y0,
            (problem.t0, problem.t_end()),
            problem.solver,
            Some(problem.times()),
        )?
    } else {
        Trajectory {
            times: problem.times().to_vec(),
            states: vec![y0; problem.times().len()],
            ..Default::default()
        }
    };
    let states: Vec<Vec<f64>> = traj.states.iter().map(|y| y[..n].to_vec()).collect();
    let loss = problem.loss.value(&states)?;
    let dl = problem.loss.gradient(&states)?;
    let mut grad = DVector::zeros(np);
    for (y, g) in traj.states.iter().zip(&dl) {
        let s = DMatrixView::from_slice(&y[n..], n, np);
        grad += s.tr_mul(&DVector::from_column_slice(g));
    }
    Ok(LossGradient {
        loss,
        gradient: grad.as_slice().to_vec(),
    })
}

/// `[a; g]` in reversed time `s = −t`: `da/ds = Jxᵀa`, `dg/ds = Jpᵀa`.
struct AdjointSystem<'a, D: ?Sized> {
    dynamics: &'a mut D,
    p: &'a [f64],
    dense: &'a [DenseStep],
    n: usize,
    x: Vec<f64>,
}

impl<D: ParametricDynamics + ?Sized> AdjointSystem<'_, D> {
    fn state_at(&mut self, t: f64) {
        let i = self.dense.partition_point(|s| s.t_end() < t).min(self.dense.len() - 1);
        self.dense[i].eval_into(t, &mut self.x);
    }
}

impl<D: ParametricDynamics + ?Sized> OdeSystem for AdjointSystem<'_, D> {
    fn dim(&self) -> usize {
        self.n + self.p.len()
    }

    fn rhs(&mut self, s: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let t = -s;
        self.state_at(t);
        let x = std::mem::take(&mut self.x);
        let lin = self.dynamics.linearize(t, &x, self.p);
        self.x = x;
        let (da, dg) = lin?.pullback(&y[..self.n]);
        dy[..self.n].copy_from_slice(&da);
        dy[self.n..].copy_from_slice(&dg);
        Ok(())
    }
}

pub fn grad_backward_adjoint<D, L>(
    dynamics: &mut D,
    p: &[f64],
    problem: &GradientProblem<'_, L>,
) -> Result<LossGradient>
where
    D: ParametricDynamics + ?Sized,
    L: TrajectoryLoss + ?Sized,
{
    problem.check(dynamics, p)?;
    let (n, np) = (dynamics.dim(), p.len());
    let times = problem.times();
    if times.is_empty() {
        return Ok(zero_gradient(np));
    }
    if problem.t_end() <= problem.t0 {
        let states = vec![problem.x0.to_vec(); times.len()];
        return Ok(LossGradient {
            loss: problem.loss.value(&states)?,
            gradient: vec![0.0; np],
        });
    }
    if problem.solver.method != Method::AdaptiveRk45 {
        return Err(Error::Unsupported(
            "the adjoint method needs the adaptive solver".into(),
        ));
    }
    let (traj, dense) = {
        let mut sys = Bound::new(&mut *dynamics, p)?;
        solve_dense(
            &mut sys,
            problem.x0,
            (problem.t0, problem.t_end()),
            problem.solver,
            Some(times),
        )?
    };
    if !traj.event_times.is_empty() {
        return Err(Error::Unsupported(format!(
            "backward adjoint over a trajectory with {} event(s)",
            traj.event_times.len()
        )));
    }
    let loss = problem.loss.value(&traj.states)?;
    let dl = problem.loss.gradient(&traj.states)?;

    let mut sys = AdjointSystem {
        dynamics,
        p,
        dense: &dense,
        n,
        x: vec![0.0; n],
    };
    let mut y = vec![0.0; n + np];
    let mut t_hi = problem.t_end();
    for k in (0..times.len()).rev() {
        let t_k = times[k];
        if t_k < t_hi {
            y = integrate_back(&mut sys, &y, t_k, t_hi, problem.solver)?;
            t_hi = t_k;
        }
        axpy(&mut y[..n], 1.0, &dl[k]);
    }
    if t_hi > problem.t0 {
        y = integrate_back(&mut sys, &y, problem.t0, t_hi, problem.solver)?;
    }
    Ok(LossGradient {
        loss,
        gradient: y[n..].to_vec(),
    })
}

fn integrate_back<D: ParametricDynamics + ?Sized>(
    sys: &mut AdjointSystem<'_, D>,
    y: &[f64],
    t_lo: f64,
    t_hi: f64,
    solver: &SolverConfig,
) -> Result<Vec<f64>> {
    let traj = solve(sys, y, (-t_hi, -t_lo), solver, Some(&[-t_lo]))?;
    Ok(traj.states.into_iter().next().expect("one saved sample"))
}

/// Central differences with step `h_rel·max(1, |pᵢ|)`.
pub fn finite_difference_gradient<F>(mut loss: F, p: &[f64], h_rel: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h_rel > 0.0 && h_rel.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must be positive, got {h_rel}"
        )));
    }
    let mut q = p.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for i in 0..p.len() {
        let step = h_rel * p[i].abs().max(1.0);
        q[i] = p[i] + step;
        let up = loss(&q)?;
        q[i] = p[i] - step;
        let down = loss(&q)?;
        q[i] = p[i];
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// Loss gradient by central differences over full rollouts.
pub fn finite_difference_loss_gradient<D, L>(
    dynamics: &mut D,
    p: &[f64],
    problem: &GradientProblem<'_, L>,
    h_rel: f64,
) -> Result<Vec<f64>>
where
    D: ParametricDynamics + ?Sized,
    L: TrajectoryLoss + ?Sized,
{
    problem.check(dynamics, p)?;
    finite_difference_gradient(|q| loss_value(dynamics, q, problem), p, h_rel)
}

/// Size of the system integrated by [`grad_forward_sensitivity`].
pub fn forward_sensitivity_dim<D: ParametricDynamics + ?Sized>(dynamics: &mut D) -> usize {
    let p = vec![0.0; dynamics.n_params()];
    ForwardSensitivitySystem::new(dynamics, &p).dim()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::loss::{MseLoss, TerminalLoss};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    /// ẋ = p₀·x
    struct Growth;

    impl ParametricDynamics for Growth {
        fn dim(&self) -> usize {
            1
        }
        fn n_params(&self) -> usize {
            1
        }
        fn rhs(&mut self, _t: f64, x: &[f64], p: &[f64], dx: &mut [f64]) -> Result<()> {
            dx[0] = p[0] * x[0];
            Ok(())
        }
        fn linearize(&mut self, _t: f64, x: &[f64], p: &[f64]) -> Result<Linearization> {
            Ok(Linearization {
                f: vec![p[0] * x[0]],
                jx: DMatrix::from_element(1, 1, p[0]),
                jp: DMatrix::from_element(1, 1, x[0]),
            })
        }
    }

    /// Damped oscillator with forcing amplitude p₂ and a parameter p₃ that
    /// does not enter the dynamics.
    struct Oscillator;

    impl ParametricDynamics for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn n_params(&self) -> usize {
            4
        }
        fn rhs(&mut self, t: f64, x: &[f64], p: &[f64], dx: &mut [f64]) -> Result<()> {
            dx[0] = x[1];
            dx[1] = -p[0] * x[0] - p[1] * x[1] + p[2] * t.sin();
            Ok(())
        }
        fn linearize(&mut self, t: f64, x: &[f64], p: &[f64]) -> Result<Linearization> {
            let mut f = vec![0.0; 2];
            self.rhs(t, x, p, &mut f)?;
            Ok(Linearization {
                f,
                jx: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -p[0], -p[1]]),
                jp: DMatrix::from_row_slice(2, 4, &[0.0, 0.0, 0.0, 0.0, -x[0], -x[1], t.sin(), 0.0]),
            })
        }
    }

    fn tight() -> SolverConfig {
        SolverConfig::adaptive(1e-10, 1e-12)
    }

    #[test]
    fn growth_gradient_is_one() {
        let loss = TerminalLoss::new(1.0, vec![1.0]);
        let cfg = tight();
        let problem = GradientProblem {
            x0: &[1.0],
            t0: 0.0,
            loss: &loss,
            solver: &cfg,
        };
        for method in [GradientMethod::ForwardSensitivity, GradientMethod::BackwardAdjoint] {
            let g = loss_gradient(method, &mut Growth, &[0.0], &problem).unwrap();
            assert_abs_diff_eq!(g.gradient[0], 1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(g.loss, 1.0, epsilon = 1e-9);
        }
        let g = grad_discretize_backprop(&mut Growth, &[0.0], &problem, 0.01).unwrap();
        assert_abs_diff_eq!(g.gradient[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn growth_gradient_off_zero() {
        let loss = TerminalLoss::new(1.0, vec![1.0]);
        let cfg = tight();
        let problem = GradientProblem {
            x0: &[1.0],
            t0: 0.0,
            loss: &loss,
            solver: &cfg,
        };
        let exact = 0.5f64.exp();
        for method in [GradientMethod::ForwardSensitivity, GradientMethod::BackwardAdjoint] {
            let g = loss_gradient(method, &mut Growth, &[0.5], &problem).unwrap();
            assert_abs_diff_eq!(g.gradient[0], exact, epsilon = 1e-6);
        }
    }

    fn oscillator_problem() -> (MseLoss, SolverConfig) {
        let times: Vec<f64> = (1..=20).map(|k| 0.05 * k as f64).collect();
        let targets = times.iter().map(|t| vec![t.cos(), 0.3 * t]).collect();
        (MseLoss::new(times, targets).unwrap(), tight())
    }

    #[test]
    fn methods_agree_on_oscillator() {
        let (loss, cfg) = oscillator_problem();
        let problem = GradientProblem {
            x0: &[1.0, 0.0],
            t0: 0.0,
            loss: &loss,
            solver: &cfg,
        };
        let p = [4.0, 0.3, 0.7, 2.0];
        let fd = finite_difference_loss_gradient(&mut Oscillator, &p, &problem, 1e-6).unwrap();
        let fwd = grad_forward_sensitivity(&mut Oscillator, &p, &problem).unwrap();
        let adj = grad_backward_adjoint(&mut Oscillator, &p, &problem).unwrap();
        let dtb = grad_discretize_backprop(&mut Oscillator, &p, &problem, 0.001).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(fwd.gradient[i], fd[i], epsilon = 1e-6);
            assert_abs_diff_eq!(adj.gradient[i], fd[i], epsilon = 1e-6);
            assert_abs_diff_eq!(dtb.gradient[i], fd[i], epsilon = 1e-6);
        }
        assert_eq!(fwd.gradient[3], 0.0);
        assert_eq!(adj.gradient[3], 0.0);
        assert_eq!(dtb.gradient[3], 0.0);
        assert_abs_diff_eq!(fwd.loss, adj.loss, epsilon = 1e-9);
    }

    #[test]
    fn discretize_backprop_matches_fd_of_rk4() {
        let (loss, _) = oscillator_problem();
        let cfg = SolverConfig::rk4(0.05);
        let problem = GradientProblem {
            x0: &[1.0, 0.0],
            t0: 0.0,
            loss: &loss,
            solver: &cfg,
        };
        let p = [4.0, 0.3, 0.7, 2.0];
        let g = grad_discretize_backprop(&mut Oscillator, &p, &problem, 0.05).unwrap();
        let fd = finite_difference_loss_gradient(&mut Oscillator, &p, &problem, 1e-6).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(g.gradient[i], fd[i], epsilon = 1e-8);
        }
        assert_abs_diff_eq!(
            g.loss,
            loss_value(&mut Oscillator, &p, &problem).unwrap(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn empty_dataset_gives_zero_gradient() {
        let loss = MseLoss::new(vec![], vec![]).unwrap();
        let cfg = tight();
        let problem = GradientProblem {
            x0: &[1.0, 0.0],
            t0: 0.0,
            loss: &loss,
            solver: &cfg,
        };
        for method in [
            GradientMethod::DiscretizeBackprop { h: 0.01 },
            GradientMethod::ForwardSensitivity,
            GradientMethod::BackwardAdjoint,
        ] {
            let g = loss_gradient(method, &mut Oscillator, &[1.0; 4], &problem).unwrap();
            assert_eq!(g.gradient, vec![0.0; 4]);
        }
    }

    #[test]
    fn trajectory_independent_loss_gives_zero() {
        let loss = TerminalLoss::new(1.0, vec![0.0, 0.0]);
        let cfg = tight();
        let problem = GradientProblem {
            x0: &[1.0, 0.0],
            t0: 0.0,
            loss: &loss,
            solver: &cfg,
        };
        let g = grad_backward_adjoint(&mut Oscillator, &[4.0, 0.3, 0.7, 2.0], &problem).unwrap();
        assert_eq!(g.gradient, vec![0.0; 4]);
    }

    #[test]
    fn off_grid_samples_rejected() {
        let loss = TerminalLoss::new(0.015, vec![1.0]);
        let cfg = tight();
        let problem = GradientProblem {
            x0: &[1.0],
            t0: 0.0,
            loss: &loss,
            solver: &cfg,
        };
        assert!(matches!(
            grad_discretize_backprop(&mut Growth, &[0.0], &problem, 0.01),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn adjoint_refuses_events() {
        struct Bouncing;
        impl ParametricDynamics for Bouncing {
            fn dim(&self) -> usize {
                1
            }
            fn n_params(&self) -> usize {
                1
            }
            fn rhs(&mut self, _t: f64, _x: &[f64], p: &[f64], dx: &mut [f64]) -> Result<()> {
                dx[0] = -p[0];
                Ok(())
            }
            fn linearize(&mut self, _t: f64, _x: &[f64], p: &[f64]) -> Result<Linearization> {
                Ok(Linearization {
                    f: vec![-p[0]],
                    jx: DMatrix::zeros(1, 1),
                    jp: DMatrix::from_element(1, 1, -1.0),
                })
            }
            fn n_events(&self) -> usize {
                1
            }
            fn event_indicators(&mut self, _t: f64, x: &[f64], _p: &[f64], z: &mut [f64]) -> Result<()> {
                z[0] = x[0];
                Ok(())
            }
            fn handle_event(&mut self, _t: f64, x: &mut [f64], _p: &[f64]) -> Result<()> {
                x[0] = 1.0;
                Ok(())
            }
        }
        let loss = TerminalLoss::new(1.0, vec![1.0]);
        let cfg = tight();
        let problem = GradientProblem {
            x0: &[0.5],
            t0: 0.0,
            loss: &loss,
            solver: &cfg,
        };
        assert!(matches!(
            grad_backward_adjoint(&mut Bouncing, &[1.0], &problem),
            Err(Error::Unsupported(_))
        ));
        assert!(grad_discretize_backprop(&mut Bouncing, &[1.0], &problem, 0.01).is_ok());
    }

    #[test]
    fn quadratic_fd() {
        let g = finite_difference_gradient(|p| Ok(p[0] * p[0]), &[3.0], 1e-6).unwrap();
        assert_abs_diff_eq!(g[0], 6.0, epsilon = 1e-6);
        let g = finite_difference_gradient(|_| Ok(4.2), &[3.0, -1.0], 1e-6).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn augmented_size() {
        assert_eq!(forward_sensitivity_dim(&mut Oscillator), 5 * 2);
        assert_eq!(forward_sensitivity_dim(&mut Growth), 2);
    }
}
