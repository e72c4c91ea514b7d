//! Least-squares fits and binomial confidence intervals for the reports.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("zero variance in x")]
    DegenerateFit,
    #[error("log-log fit needs strictly positive coordinates")]
    NonPositiveData,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; 0 for a two-point fit.
    pub stderr: f64,
}

/// Ordinary least squares y ≈ intercept + slope·x.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<FitResult, FitError> {
    let n = x.len();
    if n < 2 {
        return Err(FitError::TooFewPoints(n));
    }
    assert_eq!(n, y.len());
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|xi| (xi - mx) * (xi - mx)).sum();
    if sxx == 0.0 {
        return Err(FitError::DegenerateFit);
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;

    let stderr = if n > 2 {
        let ssr: f64 = x
            .iter()
            .zip(y)
            .map(|(xi, yi)| {
                let r = yi - (intercept + slope * xi);
                r * r
            })
            .sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };

    Ok(FitResult {
        slope,
        intercept,
        stderr,
    })
}

/// Log-log power-law fit: the slope of ln y against ln x.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> Result<FitResult, FitError> {
    if x.iter().chain(y).any(|&v| v <= 0.0) {
        return Err(FitError::NonPositiveData);
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

/// Semi-log decay fit: y ≈ A e^{−rate·x}; returns the positive rate.
pub fn fit_decay_rate(x: &[f64], y: &[f64]) -> Result<FitResult, FitError> {
    if y.iter().any(|&v| v <= 0.0) {
        return Err(FitError::NonPositiveData);
    }
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let fit = linear_fit(x, &ly)?;
    Ok(FitResult {
        slope: -fit.slope,
        intercept: fit.intercept,
        stderr: fit.stderr,
    })
}

/// 95% Wilson score interval for a binomial proportion.
pub fn wilson_interval(hits: u64, total: u64) -> (f64, f64) {
    if total == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054f64;
    let n = total as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}
