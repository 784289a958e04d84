//! Gaussian kernel density estimation with Silverman's rule-of-thumb bandwidth.

use serde::{Deserialize, Serialize};

use crate::dist::normal_pdf;
use crate::error::{Error, Result};

/// Densities below this value are raised to it before being used as sparsity.
pub const DENSITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    #[default]
    Silverman,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(&self, sample: &[f64]) -> Result<f64> {
        match *self {
            Bandwidth::Silverman => silverman_bandwidth(sample),
            Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => Ok(h),
            Bandwidth::Fixed(h) => Err(Error::config("bandwidth", format!("must be positive, got {h}"))),
        }
    }
}

fn mean_sd(sample: &[f64]) -> (f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    let ss = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Linearly interpolated sample quantile of sorted data.
fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `1.06 * min(sd, IQR / 1.34) * m^(-1/5)`; falls back to `sd` when the IQR
/// vanishes, and fails when the sample has no spread at all.
pub fn silverman_bandwidth(sample: &[f64]) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::input("bandwidth selection needs at least two points"));
    }
    let (_, sd) = mean_sd(sample);
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = interpolated_quantile(&sorted, 0.75) - interpolated_quantile(&sorted, 0.25);
    let mut spread = sd.min(iqr / 1.34);
    if !(spread > 0.0) {
        spread = sd;
    }
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::Numeric("sample has zero spread; bandwidth would be zero".into()));
    }
    Ok(1.06 * spread * (sample.len() as f64).powf(-0.2))
}

/// `(m h)^-1 * sum_j phi((x - X_j) / h)` at every point.
pub fn gaussian_kde(sample: &[f64], points: &[f64], h: f64) -> Result<Vec<f64>> {
    if sample.len() < 2 {
        return Err(Error::input("density estimation needs at least two sample points"));
    }
    if !(h > 0.0) {
        return Err(Error::Numeric(format!("bandwidth must be positive, got {h}")));
    }
    let norm = 1.0 / (sample.len() as f64 * h);
    Ok(points
        .iter()
        .map(|&x| norm * sample.iter().map(|&v| normal_pdf((x - v) / h)).sum::<f64>())
        .collect())
}

/// Product-Gaussian bivariate density at `(x, y)`.
pub fn gaussian_kde_2d(sample: &[(f64, f64)], x: f64, y: f64, hx: f64, hy: f64) -> Result<f64> {
    if sample.len() < 2 {
        return Err(Error::input("density estimation needs at least two sample points"));
    }
    if !(hx > 0.0 && hy > 0.0) {
        return Err(Error::Numeric("bandwidths must be positive".into()));
    }
    let sum: f64 = sample
        .iter()
        .map(|&(a, b)| normal_pdf((x - a) / hx) * normal_pdf((y - b) / hy))
        .sum();
    Ok(sum / (sample.len() as f64 * hx * hy))
}

/// Raises a density to [`DENSITY_FLOOR`], logging when it had to.
pub fn floor_density(v: f64) -> f64 {
    if v < DENSITY_FLOOR || !v.is_finite() {
        log::warn!("estimated density {v:e} floored at {DENSITY_FLOOR:e}");
        DENSITY_FLOOR
    } else {
        v
    }
}
