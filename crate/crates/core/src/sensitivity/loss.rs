use crate::error::{Error, Result};

/// Loss over a trajectory sampled at fixed times.
pub trait TrajectoryLoss {
    /// Strictly ascending.
    fn sample_times(&self) -> &[f64];
    fn value(&self, states: &[Vec<f64>]) -> Result<f64>;
    /// `∂L/∂x(t_k)` for every sample `k`.
    fn gradient(&self, states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>>;
}

fn check_rows(states: &[Vec<f64>], n_rows: usize, width: usize) -> Result<()> {
    if states.len() != n_rows {
        return Err(Error::LengthMismatch {
            expected: n_rows,
            got: states.len(),
        });
    }
    if let Some(row) = states.iter().find(|r| r.len() != width) {
        return Err(Error::Dimension {
            context: "loss sample",
            expected: width,
            got: row.len(),
        });
    }
    Ok(())
}

/// Mean over samples and channels of the squared error.
#[derive(Debug, Clone, PartialEq)]
pub struct MseLoss {
    pub times: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
}

impl MseLoss {
    pub fn new(times: Vec<f64>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != targets.len() {
            return Err(Error::LengthMismatch {
                expected: times.len(),
                got: targets.len(),
            });
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("sample times must be strictly ascending".into()));
        }
        Ok(Self { times, targets })
    }

    fn width(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    fn count(&self) -> f64 {
        (self.targets.len() * self.width()).max(1) as f64
    }
}

impl TrajectoryLoss for MseLoss {
    fn sample_times(&self) -> &[f64] {
        &self.times
    }

    fn value(&self, states: &[Vec<f64>]) -> Result<f64> {
        check_rows(states, self.targets.len(), self.width())?;
        let sum: f64 = states
            .iter()
            .zip(&self.targets)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)))
            .sum();
        Ok(sum / self.count())
    }

    fn gradient(&self, states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_rows(states, self.targets.len(), self.width())?;
        let scale = 2.0 / self.count();
        Ok(states
            .iter()
            .zip(&self.targets)
            .map(|(x, y)| x.iter().zip(y).map(|(a, b)| scale * (a - b)).collect())
            .collect())
    }
}

/// `L = w · x(t)` at a single time.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalLoss {
    times: [f64; 1],
    pub weights: Vec<f64>,
}

impl TerminalLoss {
    pub fn new(t: f64, weights: Vec<f64>) -> Self {
        Self { times: [t], weights }
    }
}

impl TrajectoryLoss for TerminalLoss {
    fn sample_times(&self) -> &[f64] {
        &self.times
    }

    fn value(&self, states: &[Vec<f64>]) -> Result<f64> {
        check_rows(states, 1, self.weights.len())?;
        Ok(states[0].iter().zip(&self.weights).map(|(x, w)| x * w).sum())
    }

    fn gradient(&self, states: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_rows(states, 1, self.weights.len())?;
        Ok(vec![self.weights.clone()])
    }
}
