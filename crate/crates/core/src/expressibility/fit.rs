use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Residual sum of squares.
    pub rss: f64,
    /// Standard error of the slope (zero for two points or a perfect fit).
    pub slope_se: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Data(format!(
            "linear fit needs matching series of at least 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Data("linear fit needs at least two distinct x values".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - slope * a - intercept).powi(2)).sum();
    let tss: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let r2 = if tss == 0.0 { if rss == 0.0 { 1.0 } else { 0.0 } } else { 1.0 - rss / tss };
    let slope_se = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r2,
        rss,
        slope_se,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub amplitude: f64,
    pub base: f64,
    /// 95% confidence interval of `base`.
    pub base_ci: (f64, f64),
    /// R² of the log-linear regression.
    pub r2: f64,
}

/// Fits `y = a / base^r` by least squares on `ln y`.
pub fn fit_decay(r: &[f64], y: &[f64]) -> Result<DecayFit> {
    if r.len() < 4 {
        return Err(Error::Data(format!("decay fit needs at least 4 points, got {}", r.len())));
    }
    if let Some(bad) = y.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::Data(format!("decay fit needs positive values, got {bad}")));
    }
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let lin = fit_linear(r, &logs)?;
    let t = StudentsT::new(0.0, 1.0, (r.len() - 2) as f64)
        .map_err(|e| Error::Numeric(format!("t distribution: {e}")))?
        .inverse_cdf(0.975);
    let half = t * lin.slope_se;
    Ok(DecayFit {
        amplitude: lin.intercept.exp(),
        base: (-lin.slope).exp(),
        base_ci: ((-lin.slope - half).exp(), (-lin.slope + half).exp()),
        r2: lin.r2,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendComparison {
    pub linear: LinearFit,
    /// Residual sum of squares of `y = a·e^{b x}` (fitted on `ln y`),
    /// measured on the original scale.
    pub exponential_rss: f64,
    pub linear_wins: bool,
}

/// Compares a straight line against an exponential for the same series.
pub fn compare_trends(x: &[f64], y: &[f64]) -> Result<TrendComparison> {
    let linear = fit_linear(x, y)?;
    if let Some(bad) = y.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Data(format!("exponential fit needs positive values, got {bad}")));
    }
    let logs: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let e = fit_linear(x, &logs)?;
    let exponential_rss = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (e.intercept + e.slope * a).exp()).powi(2))
        .sum();
    Ok(TrendComparison {
        linear,
        exponential_rss,
        linear_wins: linear.rss < exponential_rss,
    })
}
