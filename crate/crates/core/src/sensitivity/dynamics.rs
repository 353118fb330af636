use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::ode::OdeSystem;

/// `f(t, x, p)` with `∂f/∂x` and `∂f/∂p` at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization {
    pub f: Vec<f64>,
    /// n × n
    pub jx: DMatrix<f64>,
    /// n × |p|
    pub jp: DMatrix<f64>,
}

impl Linearization {
    /// `(wᵀ·∂f/∂x, wᵀ·∂f/∂p)`.
    pub fn pullback(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let w = nalgebra::DVector::from_column_slice(w);
        (
            self.jx.tr_mul(&w).as_slice().to_vec(),
            self.jp.tr_mul(&w).as_slice().to_vec(),
        )
    }
}

/// Parametric ODE `ẋ = f(t, x, p)`. The initial state does not depend on
/// `p`, so every gradient method starts from `∂x0/∂p = 0`.
pub trait ParametricDynamics {
    fn dim(&self) -> usize;
    fn n_params(&self) -> usize;
    fn rhs(&mut self, t: f64, x: &[f64], p: &[f64], dx: &mut [f64]) -> Result<()>;
    fn linearize(&mut self, t: f64, x: &[f64], p: &[f64]) -> Result<Linearization>;

    fn n_events(&self) -> usize {
        0
    }

    fn event_indicators(&mut self, _t: f64, _x: &[f64], _p: &[f64], _z: &mut [f64]) -> Result<()> {
        Ok(())
    }

    fn handle_event(&mut self, _t: f64, _x: &mut [f64], _p: &[f64]) -> Result<()> {
        Ok(())
    }
}

/// Dynamics with the parameters fixed, as a plain ODE system.
pub struct Bound<'a, D: ?Sized> {
    pub dynamics: &'a mut D,
    pub p: &'a [f64],
}

impl<'a, D: ParametricDynamics + ?Sized> Bound<'a, D> {
    pub fn new(dynamics: &'a mut D, p: &'a [f64]) -> Result<Self> {
        if p.len() != dynamics.n_params() {
            return Err(Error::Dimension {
                context: "parameter vector",
                expected: dynamics.n_params(),
                got: p.len(),
            });
        }
        Ok(Self { dynamics, p })
    }
}

impl<D: ParametricDynamics + ?Sized> OdeSystem for Bound<'_, D> {
    fn dim(&self) -> usize {
        self.dynamics.dim()
    }

    fn rhs(&mut self, t: f64, x: &[f64], dx: &mut [f64]) -> Result<()> {
        self.dynamics.rhs(t, x, self.p, dx)
    }

    fn n_events(&self) -> usize {
        self.dynamics.n_events()
    }

    fn event_indicators(&mut self, t: f64, x: &[f64], z: &mut [f64]) -> Result<()> {
        self.dynamics.event_indicators(t, x, self.p, z)
    }

    fn handle_event(&mut self, t: f64, x: &mut [f64]) -> Result<()> {
        self.dynamics.handle_event(t, x, self.p)
    }
}
