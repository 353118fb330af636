//! Dormand–Prince 5(4) embedded pair (Hairer/Wanner DOPRI5 tableau) with its
//! 4th-order continuous extension.

use crate::error::Result;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// 5th minus embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Continuous extension over one accepted step `[t, t + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep {
    pub t: f64,
    pub h: f64,
    rcont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t_end(&self) -> f64 {
        self.t + self.h
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let theta = (t - self.t) / self.h;
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for i in 0..out.len() {
            out[i] = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.rcont[0].len()];
        self.eval_into(t, &mut out);
        out
    }
}

/// Outcome of one attempted embedded step.
#[derive(Debug, Clone)]
pub struct AdaptiveStep {
    pub x_next: Vec<f64>,
    /// Weighted RMS error estimate; the step is acceptable iff `error <= 1`.
    pub error: f64,
    pub h_next: f64,
    pub dense: DenseStep,
    /// Derivative at the step end (first stage of the next step).
    pub(crate) k_last: Vec<f64>,
}

impl AdaptiveStep {
    pub fn accepted(&self) -> bool {
        self.error <= 1.0
    }
}

/// Attempts one Dormand–Prince step of size `h` from `(t, x)`.
pub fn adaptive_step<F>(mut rhs: F, t: f64, x: &[f64], h: f64, rtol: f64, atol: f64) -> Result<AdaptiveStep>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut k1 = vec![0.0; x.len()];
    rhs(t, x, &mut k1);
    attempt(
        |t, x, dx| {
            rhs(t, x, dx);
            Ok(())
        },
        t,
        x,
        &k1,
        h,
        rtol,
        atol,
    )
}

pub(crate) fn attempt<F>(
    mut rhs: F,
    t: f64,
    x: &[f64],
    k1: &[f64],
    h: f64,
    rtol: f64,
    atol: f64,
) -> Result<AdaptiveStep>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = x.len();
    let mut y = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];

    for i in 0..n {
        y[i] = x[i] + h * A21 * k1[i];
    }
    rhs(t + C2 * h, &y, &mut k2)?;
    for i in 0..n {
        y[i] = x[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    rhs(t + C3 * h, &y, &mut k3)?;
    for i in 0..n {
        y[i] = x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    rhs(t + C4 * h, &y, &mut k4)?;
    for i in 0..n {
        y[i] = x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    rhs(t + C5 * h, &y, &mut k5)?;
    for i in 0..n {
        y[i] = x[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    rhs(t + h, &y, &mut k6)?;
    let x_next: Vec<f64> = (0..n)
        .map(|i| x[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]))
        .collect();
    rhs(t + h, &x_next, &mut k7)?;

    let mut sum = 0.0;
    for i in 0..n {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = atol + rtol * x[i].abs().max(x_next[i].abs());
        sum += (e / sc) * (e / sc);
    }
    let error = if n == 0 { 0.0 } else { (sum / n as f64).sqrt() };
    let factor = if error == 0.0 {
        MAX_FACTOR
    } else if error.is_finite() {
        (SAFETY * error.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
    } else {
        MIN_FACTOR
    };

    let r2: Vec<f64> = (0..n).map(|i| x_next[i] - x[i]).collect();
    let r3: Vec<f64> = (0..n).map(|i| h * k1[i] - r2[i]).collect();
    let r4: Vec<f64> = (0..n).map(|i| r2[i] - h * k7[i] - r3[i]).collect();
    let r5: Vec<f64> = (0..n)
        .map(|i| h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]))
        .collect();

    Ok(AdaptiveStep {
        x_next,
        error: if error.is_nan() { f64::INFINITY } else { error },
        h_next: h * factor,
        dense: DenseStep {
            t,
            h,
            rcont: [x.to_vec(), r2, r3, r4, r5],
        },
        k_last: k7,
    })
}
