//! Closed-form weighted linear regressions and the log-log power law.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    pub intercept_uncertainty: f64,
    pub slope_uncertainty: f64,
    /// Covariance of `(intercept, slope)`.
    pub covariance: [[f64; 2]; 2],
    pub chi2: f64,
    pub dof: usize,
}

fn weights(n: usize, sigmas: Option<&[f64]>) -> Result<Vec<f64>> {
    match sigmas {
        None => Ok(vec![1.0; n]),
        Some(s) if s.len() != n => Err(Error::Fit("uncertainty column has the wrong length".into())),
        Some(s) => s
            .iter()
            .map(|&v| {
                if v > 0.0 && v.is_finite() {
                    Ok(1.0 / (v * v))
                } else {
                    Err(Error::Fit(format!("uncertainty must be positive and finite, got {v}")))
                }
            })
            .collect(),
    }
}

/// Weighted straight line `y = a + b x`. Without uncertainties the
/// covariance is scaled by the residual variance.
pub fn fit_line(xs: &[f64], ys: &[f64], sigmas: Option<&[f64]>) -> Result<LineFit> {
    let n = xs.len();
    if ys.len() != n {
        return Err(Error::Fit("x and y columns differ in length".into()));
    }
    if n < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {n}")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite data".into()));
    }
    let w = weights(n, sigmas)?;
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    // Centred sums avoid cancellation for clustered abscissae.
    let sxx: f64 = w.iter().zip(xs).map(|(w, x)| w * (x - mx) * (x - mx)).sum();
    let sxy: f64 = w
        .iter()
        .zip(xs)
        .zip(ys)
        .map(|((w, x), y)| w * (x - mx) * (y - my))
        .sum();
    let spread = xs.iter().map(|x| x.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    if !(sxx > 1e-24 * sw * spread * spread) {
        return Err(Error::Fit("degenerate design: all abscissae are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let chi2: f64 = w
        .iter()
        .zip(xs)
        .zip(ys)
        .map(|((w, x), y)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let dof = n - 2;
    let scale = if sigmas.is_some() { 1.0 } else { chi2 / dof as f64 };
    let var_b = scale / sxx;
    let var_a = scale * (1.0 / sw + mx * mx / sxx);
    let cov_ab = -scale * mx / sxx;
    Ok(LineFit {
        intercept,
        slope,
        intercept_uncertainty: var_a.sqrt(),
        slope_uncertainty: var_b.sqrt(),
        covariance: [[var_a, cov_ab], [cov_ab, var_b]],
        chi2,
        dof,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProportionalFit {
    pub slope: f64,
    pub slope_uncertainty: f64,
    pub chi2: f64,
    pub dof: usize,
}

/// Weighted line through the origin, `y = b x`.
pub fn fit_proportional(xs: &[f64], ys: &[f64], sigmas: Option<&[f64]>) -> Result<ProportionalFit> {
    let n = xs.len();
    if ys.len() != n || n < 2 {
        return Err(Error::Fit("need at least 2 paired points".into()));
    }
    let w = weights(n, sigmas)?;
    let sxx: f64 = w.iter().zip(xs).map(|(w, x)| w * x * x).sum();
    if !(sxx > 0.0) {
        return Err(Error::Fit("degenerate design: all abscissae are zero".into()));
    }
    let sxy: f64 = w.iter().zip(xs).zip(ys).map(|((w, x), y)| w * x * y).sum();
    let slope = sxy / sxx;
    let chi2: f64 = w
        .iter()
        .zip(xs)
        .zip(ys)
        .map(|((w, x), y)| w * (y - slope * x).powi(2))
        .sum();
    let dof = n - 1;
    let scale = if sigmas.is_some() { 1.0 } else { chi2 / dof as f64 };
    Ok(ProportionalFit {
        slope,
        slope_uncertainty: (scale / sxx).sqrt(),
        chi2,
        dof,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub exponent: f64,
    pub amplitude_uncertainty: f64,
    pub exponent_uncertainty: f64,
    /// Covariance of `(ln amplitude, exponent)`.
    pub covariance: [[f64; 2]; 2],
    pub chi2: f64,
    pub dof: usize,
}

/// `rate = A · power^k` by weighted least squares on `(ln P, ln rate)`,
/// with log-space uncertainties `σ / rate`.
pub fn fit_power_law(powers: &[f64], rates: &[f64], sigmas: Option<&[f64]>) -> Result<PowerLawFit> {
    if powers.len() != rates.len() {
        return Err(Error::Fit("power and rate columns differ in length".into()));
    }
    if powers.iter().chain(rates).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Fit("powers and rates must be positive".into()));
    }
    let lx: Vec<f64> = powers.iter().map(|p| p.ln()).collect();
    let ly: Vec<f64> = rates.iter().map(|r| r.ln()).collect();
    let ls: Option<Vec<f64>> = sigmas.map(|s| s.iter().zip(rates).map(|(s, r)| s / r).collect());
    let line = fit_line(&lx, &ly, ls.as_deref())?;
    let amplitude = line.intercept.exp();
    Ok(PowerLawFit {
        amplitude,
        exponent: line.slope,
        amplitude_uncertainty: amplitude * line.intercept_uncertainty,
        exponent_uncertainty: line.slope_uncertainty,
        covariance: line.covariance,
        chi2: line.chi2,
        dof: line.dof,
    })
}
