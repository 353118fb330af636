mod describe;
mod evaluate;
mod extract;
mod simulate;
mod train;

use std::fmt::Write as _;
use std::path::Path;

pub use describe::{describe, DescribeArgs};
pub use evaluate::{evaluate, EvaluateArgs};
pub use extract::{extract, ExtractArgs};
pub use simulate::{simulate, SimulateArgs};
pub use train::train;

use neuralfmu::models::PendulumParams;
use neuralfmu::net::Checkpoint;
use neuralfmu::nfmu::{experiment as ex, MeNeuralFmu};
use neuralfmu::ode::SolverConfig;
use neuralfmu::sensitivity::JacobianProvider;

use crate::config::RunConfig;
use crate::error::{CliResult, Context};

/// Writes a header plus rows, values with 17 significant digits.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v:.16e}");
        }
        out.push('\n');
    }
    std::fs::write(path, out).context(path.display())
}

/// Initial state of a named scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scenario {
    Train,
    Test,
}

impl Scenario {
    pub fn x0(self) -> [f64; 2] {
        match self {
            Scenario::Train => ex::TRAIN_X0,
            Scenario::Test => ex::TEST_X0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Train => "train",
            Scenario::Test => "test",
        }
    }
}

/// Model parameters and RK4 step of a run, from its config or the defaults.
pub fn run_settings(config: Option<&Path>) -> CliResult<(PendulumParams, PendulumParams, f64)> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok((cfg.reference, cfg.fmu, cfg.solver.step))
}

pub fn load_nfmu(checkpoint: &Path, fmu: &PendulumParams, step: f64) -> CliResult<(MeNeuralFmu, Vec<f64>)> {
    let ckpt = Checkpoint::load(checkpoint).context(checkpoint.display())?;
    let layer = ex::fmu_layer(fmu, JacobianProvider::DirectionalDerivative)?;
    let (nfmu, params) =
        MeNeuralFmu::from_checkpoint(&ckpt, layer, SolverConfig::rk4(step)).context(checkpoint.display())?;
    Ok((nfmu, params))
}
