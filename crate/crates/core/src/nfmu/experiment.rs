//! The spring-pendulum experiment: a frictionless model with a displaced
//! anchor learns friction and displacement from a reference system.

use super::data::Dataset;
use super::me::MeNeuralFmu;
use crate::error::Result;
use crate::model::{initialize, simulate, ModelFactory, ModelInstance, ValueReference};
use crate::models::{make_friction_pendulum, make_frictionless_pendulum, PendulumParams};
use crate::net::{Activation, Chain, DenseSpec, InitScheme, MeLayer};
use crate::ode::{SolverConfig, Trajectory};
use crate::sensitivity::JacobianProvider;

pub const TRAIN_X0: [f64; 2] = [0.5, 0.0];
pub const TEST_X0: [f64; 2] = [1.0, -1.5];
pub const N_SAMPLES: usize = 400;
pub const SAMPLE_DT: f64 = 0.01;
/// Rollout step of discretize-then-backprop training and evaluation.
pub const TRAIN_STEP: f64 = 0.01;

/// `dt·k` for `k = 1..=n`.
pub fn sample_times(n: usize, dt: f64) -> Vec<f64> {
    (1..=n).map(|k| dt * k as f64).collect()
}

/// Top chain: one identity-activated 2→2 layer.
pub fn top_layers() -> Vec<DenseSpec> {
    vec![DenseSpec::new(2, 2, Activation::Identity)]
}

/// Bottom chain: 2→8 identity, 8→8 tanh, 8→2 identity.
pub fn bottom_layers() -> Vec<DenseSpec> {
    vec![
        DenseSpec::new(2, 8, Activation::Identity),
        DenseSpec::new(8, 8, Activation::Tanh),
        DenseSpec::new(8, 2, Activation::Identity),
    ]
}

/// Tolerances for reference data.
pub fn reference_solver() -> SolverConfig {
    SolverConfig::adaptive(1e-10, 1e-12)
}

fn state_starts(inst: &dyn ModelInstance, x0: &[f64]) -> Vec<(ValueReference, f64)> {
    inst.description()
        .state_vrs
        .iter()
        .copied()
        .zip(x0.iter().copied())
        .collect()
}

fn run(inst: &mut dyn ModelInstance, x0: &[f64], times: &[f64], cfg: &SolverConfig) -> Result<Trajectory> {
    let starts = state_starts(inst, x0);
    initialize(inst, 0.0, None, &starts)?;
    let t_end = times.last().copied().unwrap_or(0.0);
    if t_end <= 0.0 {
        return Ok(Trajectory {
            times: times.to_vec(),
            states: vec![x0.to_vec(); times.len()],
            ..Default::default()
        });
    }
    Ok(simulate(inst, t_end, cfg, Some(times), &[])?.trajectory)
}

/// Reference pendulum (with friction) from `x0` at `t = 0`.
pub fn simulate_reference(
    params: &PendulumParams,
    x0: &[f64],
    times: &[f64],
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    let mut inst = make_friction_pendulum(params)?.instantiate()?;
    run(inst.as_mut(), x0, times, cfg)
}

/// Frictionless model from `x0` at `t = 0`.
pub fn simulate_fmu(params: &PendulumParams, x0: &[f64], times: &[f64], cfg: &SolverConfig) -> Result<Trajectory> {
    let mut inst = make_frictionless_pendulum(params)?.instantiate()?;
    run(inst.as_mut(), x0, times, cfg)
}

pub fn reference_dataset(x0: &[f64], n: usize, dt: f64) -> Result<Dataset> {
    let times = sample_times(n, dt);
    Dataset::from_trajectory(&simulate_reference(
        &PendulumParams::reference(),
        x0,
        &times,
        &reference_solver(),
    )?)
}

/// The frictionless model as a differentiable ME layer.
pub fn fmu_layer(params: &PendulumParams, provider: JacobianProvider) -> Result<MeLayer> {
    let inst = make_frictionless_pendulum(params)?.instantiate()?;
    MeLayer::new(inst, Some(provider))
}

/// NeuralFMU of the experiment around the frictionless model. Residual mode is
/// on for `NeutralResidual`.
pub fn build(scheme: InitScheme, provider: JacobianProvider, solver: SolverConfig) -> Result<MeNeuralFmu> {
    MeNeuralFmu::new(
        Chain::dense(&top_layers())?,
        fmu_layer(&PendulumParams::fmu(), provider)?,
        Chain::dense(&bottom_layers())?,
        solver,
        scheme == InitScheme::NeutralResidual,
    )
}
