use crate::error::{Error, Result};
use crate::ode::Trajectory;
use crate::sensitivity::{MseLoss, TrajectoryLoss};

/// Equidistant samples of the full state.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub times: Vec<f64>,
    /// One row per sample.
    pub targets: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(times: Vec<f64>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != targets.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: targets.len(),
            });
        }
        if let [first, .., last] = times[..] {
            let n = times.len();
            let dt = (last - first) / (n - 1) as f64;
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument("dataset times must be ascending".into()));
            }
            let tol = 1e-12 * (last - first).abs().max(1.0);
            if let Some((k, t)) = times
                .iter()
                .enumerate()
                .find(|(k, t)| (first + *k as f64 * dt - **t).abs() > tol)
            {
                return Err(Error::InvalidArgument(format!(
                    "dataset times are not equidistant: sample {k} at {t}, expected {}",
                    first + k as f64 * dt
                )));
            }
        }
        let width = targets.first().map_or(0, Vec::len);
        if let Some(row) = targets.iter().find(|r| r.len() != width) {
            return Err(Error::LengthMismatch {
                expected: width,
                got: row.len(),
            });
        }
        if targets.iter().flatten().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self { times, targets })
    }

    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        Self::new(traj.times.clone(), traj.states.clone())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    pub fn loss(&self) -> MseLoss {
        MseLoss {
            times: self.times.clone(),
            targets: self.targets.clone(),
        }
    }
}

/// Mean over all samples and channels of the squared error.
pub fn mse_loss(traj: &Trajectory, data: &Dataset) -> Result<f64> {
    if traj.times.len() != data.times.len() {
        return Err(Error::LengthMismatch {
            expected: data.times.len(),
            got: traj.times.len(),
        });
    }
    if let Some((a, b)) = traj
        .times
        .iter()
        .zip(&data.times)
        .find(|(a, b)| (*a - *b).abs() > 1e-9 * b.abs().max(1.0))
    {
        return Err(Error::InvalidArgument(format!("time grids differ: {a} vs {b}")));
    }
    data.loss().value(&traj.states)
}
