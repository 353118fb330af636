use super::check_finite;
use crate::error::{Error, Result};

/// One classical Runge-Kutta step of size `h`.
pub fn rk4_step<F>(mut rhs: F, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    rk4_step_with(
        |t, x, dx| {
            rhs(t, x, dx);
            Ok(())
        },
        t,
        x,
        h,
    )
}

pub(crate) fn rk4_step_with<F>(mut rhs: F, t: f64, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("rk4 step needs h > 0, got {h}")));
    }
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut y = vec![0.0; n];

    rhs(t, x, &mut k1)?;
    for i in 0..n {
        y[i] = x[i] + 0.5 * h * k1[i];
    }
    rhs(t + 0.5 * h, &y, &mut k2)?;
    for i in 0..n {
        y[i] = x[i] + 0.5 * h * k2[i];
    }
    rhs(t + 0.5 * h, &y, &mut k3)?;
    for i in 0..n {
        y[i] = x[i] + h * k3[i];
    }
    rhs(t + h, &y, &mut k4)?;

    let next: Vec<f64> = (0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    check_finite(&next, "rk4 step result")?;
    Ok(next)
}
