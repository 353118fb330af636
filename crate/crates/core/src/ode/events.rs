use crate::error::{Error, Result};

/// Bisection stops once the bracket is narrower than this (s).
pub const EVENT_TIME_TOL: f64 = 1e-12;
/// ... or once the indicator magnitude at the post-crossing end drops below this.
pub const EVENT_VALUE_TOL: f64 = 1e-10;

/// Locates a sign change of `indicator` on `[t_lo, t_hi]` by bisection.
///
/// The returned time is the end of the final bracket that lies on the
/// post-crossing side (or exactly on the root), so restarting integration
/// there does not re-trigger the same event.
pub fn locate_event<F>(mut indicator: F, t_lo: f64, t_hi: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    locate_event_with(|t| Ok(indicator(t)), t_lo, t_hi)
}

pub(crate) fn locate_event_with<F>(mut indicator: F, mut t_lo: f64, mut t_hi: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let z_lo = indicator(t_lo)?;
    let mut z_hi = indicator(t_hi)?;
    if z_hi == 0.0 {
        return Ok(t_hi);
    }
    if !(z_lo * z_hi < 0.0) {
        return Err(Error::NoSignChange { t_lo, t_hi });
    }
    let lo_positive = z_lo > 0.0;
    while t_hi - t_lo > EVENT_TIME_TOL && z_hi.abs() >= EVENT_VALUE_TOL {
        let mid = 0.5 * (t_lo + t_hi);
        if mid <= t_lo || mid >= t_hi {
            break;
        }
        let z_mid = indicator(mid)?;
        if z_mid == 0.0 {
            return Ok(mid);
        }
        if (z_mid > 0.0) == lo_positive {
            t_lo = mid;
        } else {
            t_hi = mid;
            z_hi = z_mid;
        }
    }
    Ok(t_hi)
}

/// True when an indicator moved from `before` to `after` across zero.
pub(crate) fn crossed(before: f64, after: f64) -> bool {
    before * after < 0.0 || (before != 0.0 && after == 0.0)
}
