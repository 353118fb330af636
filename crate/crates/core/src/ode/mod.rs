//! Explicit ODE integration: classical RK4 with a fixed step and an embedded
//! Dormand–Prince 5(4) pair with step-size control, dense output and event
//! location.

mod dopri;
mod events;
mod rk4;
mod solve;

pub use dopri::{adaptive_step, AdaptiveStep, DenseStep};
pub use events::{locate_event, EVENT_TIME_TOL, EVENT_VALUE_TOL};
pub use rk4::rk4_step;
pub use solve::{solve, solve_dense, solve_fn};

use crate::error::{Error, Result};

/// Integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Classical 4th-order Runge-Kutta with constant step `h0`.
    Rk4Fixed,
    /// Dormand–Prince 5(4) with error control.
    AdaptiveRk45,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub method: Method,
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveRk45,
            h0: 1e-3,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            rtol: 1e-6,
            atol: 1e-9,
            max_steps: 1_000_000,
        }
    }
}

impl SolverConfig {
    pub fn adaptive(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    pub fn rk4(h: f64) -> Self {
        Self {
            method: Method::Rk4Fixed,
            h0: h,
            h_min: h,
            h_max: h,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.h_min > 0.0
            && self.h_min <= self.h0
            && self.h0 <= self.h_max
            && self.rtol > 0.0
            && self.atol > 0.0
            && self.max_steps > 0
            && self.h0.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "solver config violates 0 < h_min <= h0 <= h_max, rtol/atol > 0: {self:?}"
            )))
        }
    }
}

/// Counters collected during a solve.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolveStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Time-stamped state samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per sample.
    pub states: Vec<Vec<f64>>,
    pub event_times: Vec<f64>,
    pub stats: SolveStats,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Values of one state channel over time.
    pub fn channel(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|row| row[i]).collect()
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }

    /// Checks the structural invariants (ascending times, one row per time,
    /// rows of equal width).
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.len() {
            return Err(Error::LengthMismatch {
                expected: self.times.len(),
                got: self.states.len(),
            });
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "trajectory times must be strictly ascending".into(),
            ));
        }
        let n = self.dim();
        if let Some(row) = self.states.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                got: row.len(),
            });
        }
        Ok(())
    }
}

/// A first-order system `ẋ = f(t, x)` with optional state events.
///
/// Event indicators must be continuous between events; a sign change marks an
/// event, which is located and passed to [`OdeSystem::handle_event`] before
/// integration restarts.
pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()>;

    fn n_events(&self) -> usize {
        0
    }

    fn event_indicators(&mut self, _t: f64, _x: &[f64], _z: &mut [f64]) -> Result<()> {
        Ok(())
    }

    /// Applies the event at `t`; may modify the state in place.
    fn handle_event(&mut self, _t: f64, _x: &mut [f64]) -> Result<()> {
        Ok(())
    }

    /// Called for every saved sample, in order.
    fn on_sample(&mut self, _t: f64, _x: &[f64]) -> Result<()> {
        Ok(())
    }
}

type IndicatorFn<'a> = Box<dyn FnMut(f64, &[f64], &mut [f64]) + 'a>;
type HandlerFn<'a> = Box<dyn FnMut(f64, &mut [f64]) + 'a>;

/// Closure-based event description for [`solve_fn`].
pub struct EventSpec<'a> {
    pub n_indicators: usize,
    pub indicators: IndicatorFn<'a>,
    pub handler: HandlerFn<'a>,
}

/// Adapts closures to [`OdeSystem`].
pub struct FnSystem<'a, F> {
    dim: usize,
    rhs: F,
    events: Option<EventSpec<'a>>,
}

impl<'a, F> FnSystem<'a, F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, rhs: F) -> Self {
        Self { dim, rhs, events: None }
    }

    pub fn with_events(mut self, events: EventSpec<'a>) -> Self {
        self.events = Some(events);
        self
    }
}

impl<F> OdeSystem for FnSystem<'_, F>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        (self.rhs)(t, x, dx);
        Ok(())
    }

    fn n_events(&self) -> usize {
        self.events.as_ref().map_or(0, |e| e.n_indicators)
    }

    fn event_indicators(&mut self, t: f64, x: &[f64], z: &mut [f64]) -> Result<()> {
        if let Some(e) = self.events.as_mut() {
            (e.indicators)(t, x, z);
        }
        Ok(())
    }

    fn handle_event(&mut self, t: f64, x: &mut [f64]) -> Result<()> {
        if let Some(e) = self.events.as_mut() {
            (e.handler)(t, x);
        }
        Ok(())
    }
}

pub(crate) fn check_finite(x: &[f64], what: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
