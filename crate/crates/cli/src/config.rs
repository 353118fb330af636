//! Run configuration for `neuralfmu train`, read from TOML.
//!
//! ```toml
//! output_dir = "runs/default"
//! init = "neutral_residual"        # or "identity_normal"
//! checkpoint_epochs = [2500, 5000]  # extra snapshots; the final one is always written
//!
//! [dataset]
//! x0 = [0.5, 0.0]
//! samples = 400
//! dt = 0.01
//!
//! [solver]
//! step = 0.01
//!
//! [train]
//! epochs = 5000
//! learning_rate = 1e-3
//! rng_seed = 1234
//! optimizer = { adam = { beta1 = 0.9, beta2 = 0.999, eps = 1e-8 } }
//! gradient_method = { method = "discretize_backprop", h = 0.01 }
//!
//! [reference]   # optional, all eight fields; defaults to the friction system
//! [fmu]         # optional, all eight fields; defaults to the frictionless model
//! ```

use std::path::{Path, PathBuf};

use neuralfmu::models::PendulumParams;
use neuralfmu::net::InitScheme;
use neuralfmu::nfmu::{experiment as ex, TrainConfig};
use neuralfmu::sensitivity::GradientMethod;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub x0: [f64; 2],
    pub samples: usize,
    pub dt: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            x0: ex::TRAIN_X0,
            samples: ex::N_SAMPLES,
            dt: ex::SAMPLE_DT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Fixed RK4 step for training and NeuralFMU rollouts.
    pub step: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { step: ex::TRAIN_STEP }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub init: InitScheme,
    pub checkpoint_epochs: Vec<usize>,
    pub dataset: DatasetConfig,
    pub solver: SolverSection,
    pub train: TrainConfig,
    pub reference: PendulumParams,
    pub fmu: PendulumParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("runs/default"),
            init: InitScheme::NeutralResidual,
            checkpoint_epochs: Vec::new(),
            dataset: DatasetConfig::default(),
            solver: SolverSection::default(),
            train: TrainConfig::default(),
            reference: PendulumParams::reference(),
            fmu: PendulumParams::fmu(),
        }
    }
}

fn positive(name: &str, v: f64) -> CliResult {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult {
        if self.train.epochs == 0 {
            return Err(CliError::config("train.epochs must be at least 1"));
        }
        self.train.validate()?;
        if let Some(k) = self
            .checkpoint_epochs
            .iter()
            .find(|&&k| k == 0 || k > self.train.epochs)
        {
            return Err(CliError::config(format!(
                "checkpoint epoch {k} outside 1..={}",
                self.train.epochs
            )));
        }
        if self.dataset.samples == 0 {
            return Err(CliError::config("dataset.samples must be at least 1"));
        }
        positive("dataset.dt", self.dataset.dt)?;
        positive("solver.step", self.solver.step)?;
        if self.dataset.x0.iter().any(|v| !v.is_finite()) {
            return Err(CliError::config("dataset.x0 must be finite"));
        }
        let ratio = self.dataset.dt / self.solver.step;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(CliError::config(format!(
                "dataset.dt ({}) must be a whole multiple of solver.step ({})",
                self.dataset.dt, self.solver.step
            )));
        }
        if let GradientMethod::DiscretizeBackprop { h } = self.train.gradient_method {
            if (h - self.solver.step).abs() > 1e-15 {
                return Err(CliError::config(format!(
                    "discretize_backprop step {h} differs from solver.step {}",
                    self.solver.step
                )));
            }
        }
        self.reference.validate()?;
        self.fmu.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_sections() {
        let cfg: RunConfig = toml::from_str(
            "output_dir = \"x\"\ncheckpoint_epochs = [10]\n[train]\nepochs = 10\ngradient_method = { method = \"forward_sensitivity\" }\n",
        )
        .unwrap();
        assert_eq!(cfg.train.epochs, 10);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(cfg.train.gradient_method, GradientMethod::ForwardSensitivity);
        cfg.validate().unwrap();
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg: RunConfig = toml::from_str("checkpoint_epochs = []\n[train]\nepochs = 0\n").unwrap();
        assert_eq!(cfg.validate().unwrap_err().code, 1);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(toml::from_str::<RunConfig>("[dataset]\nsamplez = 3\n").is_err());
    }

    #[test]
    fn checkpoint_beyond_epochs_rejected() {
        let cfg: RunConfig = toml::from_str("checkpoint_epochs = [20]\n[train]\nepochs = 10\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}
