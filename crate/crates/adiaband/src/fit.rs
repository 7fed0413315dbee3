use serde::{Deserialize, Serialize};

use crate::error::{AdiabandError, Result};

/// Numerical floor below which defect values are treated as saturated and
/// excluded from log-log fits.
pub const DEFECT_FLOOR: f64 = 1e-13;

/// Least-squares line through (log x, log y).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Points that entered the fit, as given (not logged).
    pub used: Vec<(f64, f64)>,
    /// Points excluded for sitting at or below the numerical floor.
    pub floored: Vec<(f64, f64)>,
}

impl SlopeFit {
    pub fn saturated(&self) -> bool {
        !self.floored.is_empty()
    }
}

pub fn fit_log_slope(points: &[(f64, f64)], floor: f64) -> Result<SlopeFit> {
    let (used, floored): (Vec<_>, Vec<_>) = points
        .iter()
        .cloned()
        .partition(|&(x, y)| x > 0.0 && y > floor);
    if used.is_empty() {
        return Err(AdiabandError::AllPointsAtFloor);
    }
    if used.len() < 2 {
        return Err(AdiabandError::TooFewPoints { needed: 2, got: used.len() });
    }
    let n = used.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in &used {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-30 {
        return Err(AdiabandError::TooFewPoints { needed: 2, got: 1 });
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    Ok(SlopeFit { slope, intercept, used, floored })
}
