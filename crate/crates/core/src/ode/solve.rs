use super::dopri::{attempt, DenseStep};
use super::events::{crossed, locate_event_with};
use super::rk4::rk4_step_with;
use super::{check_finite, EventSpec, FnSystem, Method, OdeSystem, SolveStats, SolverConfig, Trajectory};
use crate::error::{Error, Result};

/// Relative slack when comparing sample times against step boundaries.
const TIME_EPS: f64 = 1e-12;

/// Integrates `sys` over `t_span` starting from `x0`.
///
/// With `save_at` the trajectory holds exactly those samples (dense output
/// between accepted steps); otherwise it holds the initial point, every
/// accepted step end and every event point.
pub fn solve<S>(
    sys: &mut S,
    x0: &[f64],
    t_span: (f64, f64),
    cfg: &SolverConfig,
    save_at: Option<&[f64]>,
) -> Result<Trajectory>
where
    S: OdeSystem + ?Sized,
{
    Ok(solve_impl(sys, x0, t_span, cfg, save_at, false)?.0)
}

/// Adaptive solve that also returns the continuous extension of every
/// accepted step, in time order.
pub fn solve_dense<S>(
    sys: &mut S,
    x0: &[f64],
    t_span: (f64, f64),
    cfg: &SolverConfig,
    save_at: Option<&[f64]>,
) -> Result<(Trajectory, Vec<DenseStep>)>
where
    S: OdeSystem + ?Sized,
{
    if cfg.method != Method::AdaptiveRk45 {
        return Err(Error::Unsupported("dense output needs the adaptive method".into()));
    }
    solve_impl(sys, x0, t_span, cfg, save_at, true)
}

fn solve_impl<S>(
    sys: &mut S,
    x0: &[f64],
    t_span: (f64, f64),
    cfg: &SolverConfig,
    save_at: Option<&[f64]>,
    keep_dense: bool,
) -> Result<(Trajectory, Vec<DenseStep>)>
where
    S: OdeSystem + ?Sized,
{
    cfg.validate()?;
    let (t0, t1) = t_span;
    if x0.len() != sys.dim() {
        return Err(Error::LengthMismatch {
            expected: sys.dim(),
            got: x0.len(),
        });
    }
    check_finite(x0, "initial state")?;
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "time span must be increasing, got ({t0}, {t1})"
        )));
    }
    if let Some(s) = save_at {
        let tol = TIME_EPS * t1.abs().max(1.0);
        if s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("save_at must be strictly ascending".into()));
        }
        if s.first().is_some_and(|&f| f < t0 - tol) || s.last().is_some_and(|&l| l > t1 + tol) {
            return Err(Error::InvalidArgument("save_at outside the time span".into()));
        }
    }

    let mut out = Output::new(save_at, sys.dim());
    out.dense = keep_dense.then(Vec::new);
    match cfg.method {
        Method::AdaptiveRk45 => integrate_adaptive(sys, x0, t0, t1, cfg, &mut out)?,
        Method::Rk4Fixed => integrate_rk4(sys, x0, t0, t1, cfg, &mut out)?,
    }
    Ok((out.traj, out.dense.unwrap_or_default()))
}

/// Closure flavour of [`solve`].
pub fn solve_fn<F>(
    rhs: F,
    x0: &[f64],
    t_span: (f64, f64),
    cfg: &SolverConfig,
    events: Option<EventSpec<'_>>,
    save_at: Option<&[f64]>,
) -> Result<Trajectory>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut sys = FnSystem::new(x0.len(), rhs);
    if let Some(e) = events {
        sys = sys.with_events(e);
    }
    solve(&mut sys, x0, t_span, cfg, save_at)
}

struct Output<'a> {
    save_at: Option<&'a [f64]>,
    next: usize,
    traj: Trajectory,
    scratch: Vec<f64>,
    dense: Option<Vec<DenseStep>>,
}

impl<'a> Output<'a> {
    fn new(save_at: Option<&'a [f64]>, n: usize) -> Self {
        Self {
            save_at,
            next: 0,
            traj: Trajectory::default(),
            scratch: vec![0.0; n],
            dense: None,
        }
    }

    fn push<S: OdeSystem + ?Sized>(&mut self, sys: &mut S, t: f64, x: &[f64]) -> Result<()> {
        if self.traj.times.last().is_some_and(|&last| t <= last) {
            return Ok(());
        }
        sys.on_sample(t, x)?;
        self.traj.times.push(t);
        self.traj.states.push(x.to_vec());
        Ok(())
    }

    /// Emits the initial sample.
    fn start<S: OdeSystem + ?Sized>(&mut self, sys: &mut S, t0: f64, x0: &[f64]) -> Result<()> {
        match self.save_at {
            None => self.push(sys, t0, x0),
            Some(s) => {
                let tol = TIME_EPS * t0.abs().max(1.0);
                while self.next < s.len() && s[self.next] <= t0 + tol {
                    let ts = s[self.next];
                    self.next += 1;
                    self.push(sys, ts, x0)?;
                }
                Ok(())
            }
        }
    }

    /// Emits all requested samples in `(t_start, t_end]` using `interp`,
    /// or the step end itself when no grid was requested.
    fn step<S, I>(&mut self, sys: &mut S, t_end: f64, x_end: &[f64], last: bool, mut interp: I) -> Result<()>
    where
        S: OdeSystem + ?Sized,
        I: FnMut(&mut S, f64, &mut [f64]) -> Result<()>,
    {
        let Some(s) = self.save_at else {
            return self.push(sys, t_end, x_end);
        };
        let tol = TIME_EPS * t_end.abs().max(1.0);
        while self.next < s.len() && (s[self.next] <= t_end + tol || last) {
            let ts = s[self.next];
            self.next += 1;
            if (ts - t_end).abs() <= tol {
                self.push(sys, ts, x_end)?;
            } else {
                let mut buf = std::mem::take(&mut self.scratch);
                interp(sys, ts, &mut buf)?;
                let r = self.push(sys, ts, &buf);
                self.scratch = buf;
                r?;
            }
        }
        Ok(())
    }
}

fn eval_rhs<S: OdeSystem + ?Sized>(
    sys: &mut S,
    stats: &mut SolveStats,
    t: f64,
    x: &[f64],
    dx: &mut [f64],
) -> Result<()> {
    stats.rhs_evals += 1;
    sys.rhs(t, x, dx)?;
    check_finite(dx, "state derivative")
}

/// Earliest crossing among the indicators that changed sign over a step, with
/// the crossing located by bisection on `state_at`.
fn first_event<S, F>(
    sys: &mut S,
    z_before: &[f64],
    z_after: &[f64],
    t_lo: f64,
    t_hi: f64,
    mut state_at: F,
) -> Result<Option<f64>>
where
    S: OdeSystem + ?Sized,
    F: FnMut(&mut S, f64, &mut [f64]) -> Result<()>,
{
    let mut earliest: Option<f64> = None;
    let n = sys.dim();
    let m = z_before.len();
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; m];
    for i in 0..m {
        if !crossed(z_before[i], z_after[i]) {
            continue;
        }
        let t_ev = locate_event_with(
            |t| {
                if t == t_lo {
                    return Ok(z_before[i]);
                }
                if t == t_hi {
                    return Ok(z_after[i]);
                }
                state_at(sys, t, &mut x)?;
                sys.event_indicators(t, &x, &mut z)?;
                Ok(z[i])
            },
            t_lo,
            t_hi,
        )?;
        earliest = Some(earliest.map_or(t_ev, |e: f64| e.min(t_ev)));
    }
    Ok(earliest)
}

fn integrate_adaptive<S: OdeSystem + ?Sized>(
    sys: &mut S,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
    out: &mut Output<'_>,
) -> Result<()> {
    let n = sys.dim();
    let m = sys.n_events();
    let mut stats = SolveStats::default();
    let mut t = t0;
    let mut x = x0.to_vec();
    let mut k1 = vec![0.0; n];
    let mut z = vec![0.0; m];
    let mut z_new = vec![0.0; m];
    sys.event_indicators(t, &x, &mut z)?;
    eval_rhs(sys, &mut stats, t, &x, &mut k1)?;
    out.start(sys, t, &x)?;

    let mut h = cfg.h0.min(cfg.h_max);
    while t < t1 {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(Error::MaxSteps(cfg.max_steps));
        }
        let remaining = t1 - t;
        let last = h >= remaining || remaining - h <= TIME_EPS * t1.abs().max(1.0);
        let h_step = if last { remaining } else { h };

        let step = attempt(
            |tt, xx, dx| eval_rhs(sys, &mut stats, tt, xx, dx),
            t,
            &x,
            &k1,
            h_step,
            cfg.rtol,
            cfg.atol,
        )?;
        if !step.accepted() {
            stats.rejected += 1;
            h = step.h_next;
            if h < cfg.h_min {
                return Err(Error::StepUnderflow { t, h });
            }
            continue;
        }
        stats.accepted += 1;
        check_finite(&step.x_next, "state")?;
        let t_end = if last { t1 } else { t + h_step };
        let dense: &DenseStep = &step.dense;
        if let Some(steps) = out.dense.as_mut() {
            steps.push(dense.clone());
        }

        let event = if m > 0 {
            sys.event_indicators(t_end, &step.x_next, &mut z_new)?;
            first_event(sys, &z, &z_new, t, t_end, |_, tq, buf| {
                dense.eval_into(tq, buf);
                Ok(())
            })?
        } else {
            None
        };

        match event {
            Some(t_ev) if t_ev < t_end => {
                let mut x_ev = dense.eval(t_ev);
                out.step(sys, t_ev, &x_ev, false, |_, tq, buf| {
                    dense.eval_into(tq, buf);
                    Ok(())
                })?;
                out.traj.event_times.push(t_ev);
                sys.handle_event(t_ev, &mut x_ev)?;
                check_finite(&x_ev, "state after event")?;
                t = t_ev;
                x = x_ev;
                eval_rhs(sys, &mut stats, t, &x, &mut k1)?;
                sys.event_indicators(t, &x, &mut z)?;
            }
            ev => {
                let is_last = last && ev.is_none();
                out.step(sys, t_end, &step.x_next, is_last, |_, tq, buf| {
                    dense.eval_into(tq, buf);
                    Ok(())
                })?;
                t = t_end;
                x = step.x_next;
                k1 = step.k_last;
                if ev.is_some() {
                    out.traj.event_times.push(t);
                    sys.handle_event(t, &mut x)?;
                    check_finite(&x, "state after event")?;
                    eval_rhs(sys, &mut stats, t, &x, &mut k1)?;
                    sys.event_indicators(t, &x, &mut z)?;
                } else {
                    std::mem::swap(&mut z, &mut z_new);
                }
            }
        }
        h = step.h_next.clamp(cfg.h_min, cfg.h_max);
    }
    // Samples that fell a rounding error past the final step.
    let x_final = x.clone();
    out.step(sys, t1, &x_final, true, |_, _, buf| {
        buf.copy_from_slice(&x_final);
        Ok(())
    })?;
    out.traj.stats = stats;
    Ok(())
}

fn integrate_rk4<S: OdeSystem + ?Sized>(
    sys: &mut S,
    x0: &[f64],
    t0: f64,
    t1: f64,
    cfg: &SolverConfig,
    out: &mut Output<'_>,
) -> Result<()> {
    let h = cfg.h0;
    let m = sys.n_events();
    let mut stats = SolveStats::default();
    let n_grid = ((t1 - t0) / h - 1e-9).ceil().max(1.0) as usize;
    let grid = |k: usize| if k >= n_grid { t1 } else { t0 + k as f64 * h };
    if n_grid > cfg.max_steps {
        return Err(Error::MaxSteps(cfg.max_steps));
    }

    let mut t = t0;
    let mut x = x0.to_vec();
    let mut z = vec![0.0; m];
    let mut z_new = vec![0.0; m];
    sys.event_indicators(t, &x, &mut z)?;
    out.start(sys, t, &x)?;

    let mut k = 1;
    while k <= n_grid {
        let t_end = grid(k);
        let x_start = x.clone();
        let t_start = t;
        let x_new = rk4_step_with(|tt, xx, dx| eval_rhs(sys, &mut stats, tt, xx, dx), t, &x, t_end - t)?;
        stats.accepted += 1;

        // RK4 has no continuous extension; intermediate states re-step from the
        // step start, which is exact for the discrete scheme.
        let restep = |s: &mut S, tq: f64, buf: &mut [f64]| -> Result<()> {
            if tq <= t_start {
                buf.copy_from_slice(&x_start);
                return Ok(());
            }
            let y = rk4_step_with(|tt, xx, dx| s.rhs(tt, xx, dx), t_start, &x_start, tq - t_start)?;
            buf.copy_from_slice(&y);
            Ok(())
        };

        let event = if m > 0 {
            sys.event_indicators(t_end, &x_new, &mut z_new)?;
            first_event(sys, &z, &z_new, t, t_end, restep)?
        } else {
            None
        };

        match event {
            Some(t_ev) if t_ev < t_end => {
                let mut x_ev = vec![0.0; x.len()];
                restep(sys, t_ev, &mut x_ev)?;
                out.step(sys, t_ev, &x_ev, false, restep)?;
                out.traj.event_times.push(t_ev);
                sys.handle_event(t_ev, &mut x_ev)?;
                t = t_ev;
                x = x_ev;
                sys.event_indicators(t, &x, &mut z)?;
                // continue towards the same grid point
            }
            ev => {
                out.step(sys, t_end, &x_new, k == n_grid && ev.is_none(), restep)?;
                t = t_end;
                x = x_new;
                if ev.is_some() {
                    out.traj.event_times.push(t);
                    sys.handle_event(t, &mut x)?;
                    sys.event_indicators(t, &x, &mut z)?;
                } else {
                    std::mem::swap(&mut z, &mut z_new);
                }
                k += 1;
            }
        }
    }
    out.traj.stats = stats;
    Ok(())
}
