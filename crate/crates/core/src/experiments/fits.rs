//! Least-squares rate fits used to read off scaling exponents.

use super::ExperimentError;
use crate::linalg::pearson;

/// Ordinary least-squares line with the Pearson correlation of the inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitRecord {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
}

/// Least squares of `ys` against `xs`.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<FitRecord, ExperimentError> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(ExperimentError::BadFitInput { min: 2 });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys.iter()) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(ExperimentError::BadFitInput { min: 2 });
    }
    let slope = sxy / sxx;
    Ok(FitRecord {
        slope,
        intercept: my - slope * mx,
        r: pearson(xs, ys),
    })
}

/// Least squares on `(log x, log y)`; inputs must be strictly positive and
/// at least three points long.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<FitRecord, ExperimentError> {
    if xs.len() != ys.len() || xs.len() < 3 {
        return Err(ExperimentError::BadFitInput { min: 3 });
    }
    if xs.iter().chain(ys.iter()).any(|&v| !(v > 0.0)) {
        return Err(ExperimentError::BadFitInput { min: 3 });
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    fit_linear(&lx, &ly)
}
