use serde::Serialize;

use crate::error::{Error, Result};

/// `y = amplitude * x^exponent`, fitted by least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub exponent: f64,
    pub r_squared: f64,
    /// Residuals in log space, one per input point used.
    pub residuals: Vec<f64>,
    /// Set when some `y` was not positive; those points are skipped and, with
    /// fewer than two left, the fit is `0 * x^0`.
    pub degenerate: bool,
}

pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<PowerLawFit> {
    if xs.len() != ys.len() {
        return Err(Error::SizeMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::invalid("power-law abscissae must be positive and finite"));
    }
    let points: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(_, &y)| y > 0.0 && y.is_finite())
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    let degenerate = points.len() < xs.len();
    if points.len() < 2 {
        if xs.len() < 2 {
            return Err(Error::invalid("power-law fit needs at least two points"));
        }
        return Ok(PowerLawFit {
            amplitude: 0.0,
            exponent: 0.0,
            r_squared: 0.0,
            residuals: Vec::new(),
            degenerate: true,
        });
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("power-law fit needs distinct abscissae"));
    }
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let residuals: Vec<f64> = points.iter().map(|p| p.1 - intercept - exponent * p.0).collect();
    let sse: f64 = residuals.iter().map(|r| r * r).sum();
    Ok(PowerLawFit {
        amplitude: intercept.exp(),
        exponent,
        r_squared: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
        residuals,
        degenerate,
    })
}
