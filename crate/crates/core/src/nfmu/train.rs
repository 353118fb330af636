use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::me::MeNeuralFmu;
use crate::error::{Error, Result};
use crate::sensitivity::GradientMethod;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    GradientDescent,
    Adam(Adam),
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam(Adam::default())
    }
}

/// Optimizer with its moment estimates.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    optimizer: Optimizer,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    pub fn new(optimizer: Optimizer, n: usize) -> Self {
        Self {
            optimizer,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self.optimizer {
            Optimizer::GradientDescent => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            Optimizer::Adam(Adam { beta1, beta2, eps }) => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for i in 0..params.len() {
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub gradient_method: GradientMethod,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2500,
            learning_rate: 1e-3,
            optimizer: Optimizer::default(),
            gradient_method: GradientMethod::default(),
            rng_seed: 1234,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if let Optimizer::Adam(a) = self.optimizer {
            if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
                return Err(Error::InvalidArgument(format!("invalid Adam settings {a:?}")));
            }
        }
        match self.gradient_method {
            GradientMethod::DiscretizeBackprop { h } if !(h > 0.0 && h.is_finite()) => Err(Error::InvalidArgument(
                format!("backprop step must be positive, got {h}"),
            )),
            GradientMethod::FiniteDifference { h_rel } if !(h_rel > 0.0 && h_rel.is_finite()) => Err(
                Error::InvalidArgument(format!("finite-difference step must be positive, got {h_rel}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub params: Vec<f64>,
    /// Loss before each epoch's update.
    pub loss_history: Vec<f64>,
    /// Loss after the last update.
    pub final_loss: f64,
}

pub fn train(
    nfmu: &mut MeNeuralFmu,
    data: &Dataset,
    t0: f64,
    x0: &[f64],
    params: &[f64],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_with(nfmu, data, t0, x0, params, cfg, |_, _, _| {})
}

fn diverged(epoch: usize, loss: f64) -> Error {
    Error::Diverged { epoch, loss }
}

/// As [`train`], calling `on_epoch(epoch, loss, params)` after every epoch's
/// loss evaluation, before its update.
pub fn train_with<F>(
    nfmu: &mut MeNeuralFmu,
    data: &Dataset,
    t0: f64,
    x0: &[f64],
    params: &[f64],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(usize, f64, &[f64]),
{
    cfg.validate()?;
    let mut p = params.to_vec();
    let mut opt = OptimizerState::new(cfg.optimizer, p.len());
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lg = match nfmu.loss_gradient(cfg.gradient_method, data, t0, x0, &p) {
            Err(Error::NonFinite(_)) => return Err(diverged(epoch, f64::NAN)),
            other => other?,
        };
        if !lg.loss.is_finite() || lg.gradient.iter().any(|g| !g.is_finite()) {
            return Err(diverged(epoch, lg.loss));
        }
        history.push(lg.loss);
        on_epoch(epoch, lg.loss, &p);
        opt.step(&mut p, &lg.gradient, cfg.learning_rate);
    }
    let final_loss = match nfmu.loss(cfg.gradient_method, data, t0, x0, &p) {
        Err(Error::NonFinite(_)) => return Err(diverged(cfg.epochs, f64::NAN)),
        other => other?,
    };
    if !final_loss.is_finite() {
        return Err(diverged(cfg.epochs, final_loss));
    }
    Ok(TrainReport {
        params: p,
        loss_history: history,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn adam_first_step() {
        let mut s = OptimizerState::new(Optimizer::default(), 1);
        let mut p = [0.0];
        s.step(&mut p, &[1.0], 1e-3);
        assert_abs_diff_eq!(p[0], -1e-3, epsilon = 1e-9);
    }

    #[test]
    fn gradient_descent_step() {
        let mut s = OptimizerState::new(Optimizer::GradientDescent, 2);
        let mut p = [3.0, -1.0];
        let g = [2.0 * p[0], 2.0 * p[1]];
        s.step(&mut p, &g, 0.1);
        assert_eq!(p, [3.0 - 0.6, -1.0 + 0.2]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            epochs: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            learning_rate: f64::NAN,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..Default::default()
        }
        .validate()
        .is_ok());
        let bad_h = TrainConfig {
            gradient_method: GradientMethod::DiscretizeBackprop { h: 0.0 },
            ..Default::default()
        };
        assert!(bad_h.validate().is_err());
    }

    #[test]
    fn config_serde_shape() {
        let text = serde_json::to_string(&TrainConfig::default()).unwrap();
        assert!(text.contains("\"method\":\"discretize_backprop\""), "{text}");
        let back: TrainConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, TrainConfig::default());
    }
}
