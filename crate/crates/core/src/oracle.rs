//! Batch reference computations for validating the streaming estimator:
//! exact empirical quantiles, the empirical CDF, the smoothed population score
//! `G_k`, and the martingale (Bahadur) decomposition of the averaged iterate.

use serde::{Deserialize, Serialize};

use crate::dist::Law;
use crate::error::{Error, Result};
use crate::quadrature;
use crate::score::{ramp_scaled, ScheduleConfig};
use crate::sgd_quantile::running_mean;

const QUAD_TOL: f64 = 1e-10;

/// Lower endpoint of the minimizer set of the empirical check loss, i.e. the
/// `ceil(n tau)`-th order statistic.
pub fn sample_quantile(data: &[f64], tau: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::input("sample quantile of empty data"));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[order_index(sorted.len(), tau)])
}

/// Zero-based index of the `ceil(n p)`-th order statistic. The product is
/// shrunk by a few ulps so that e.g. `10 * 0.3` selects the third element.
pub(crate) fn order_index(n: usize, p: f64) -> usize {
    let pos = (n as f64 * p * (1.0 - 4.0 * f64::EPSILON)).ceil() as usize;
    pos.clamp(1, n) - 1
}

/// Fraction of `data` at or below `x`.
pub fn empirical_cdf(data: &[f64], x: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::input("empirical cdf of empty data"));
    }
    Ok(data.iter().filter(|&&v| v <= x).count() as f64 / data.len() as f64)
}

/// `G(x) = E g((x - X) / width)` for `X ~ law`.
///
/// Integrating by parts turns the expectation of the ramp into the average of
/// the CDF over the window: `G(x) = (2 width)^-1 * int_{x-width}^{x+width} F(u) du`.
pub fn smoothed_cdf(law: &Law, x: f64, width: f64) -> Result<f64> {
    if !(width > 0.0) {
        return Err(Error::Domain(format!("smoothing width must be positive, got {width}")));
    }
    let integral = quadrature::integrate(|u| law.cdf(u), x - width, x + width, QUAD_TOL * 2.0 * width)?;
    Ok(integral / (2.0 * width))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BahadurTerms {
    /// Per-update martingale differences `xi_k`.
    pub xi: Vec<f64>,
    pub xi_bar: f64,
    /// `Ybar_n - Q - xi_bar / f(Q)`.
    pub residual: f64,
    pub averaged: f64,
}

/// Martingale decomposition of one quantile level.
///
/// `trace[k]` is the raw iterate *before* `observations[k]` was consumed; the
/// `(k+1)`-th update uses `gamma_{k+1}`. `averaged` is the Polyak-Ruppert mean
/// reported by the estimator after all observations.
#[allow(clippy::too_many_arguments)]
pub fn bahadur_terms(
    observations: &[f64],
    trace: &[f64],
    averaged: f64,
    cfg: &ScheduleConfig,
    tau: f64,
    true_quantile: f64,
    true_density_at_quantile: f64,
    law: &Law,
) -> Result<BahadurTerms> {
    if trace.len() != observations.len() {
        return Err(Error::input(format!(
            "trace has {} entries for {} observations",
            trace.len(),
            observations.len()
        )));
    }
    if observations.is_empty() {
        return Err(Error::input("no observations"));
    }
    if !(true_density_at_quantile > 0.0) {
        return Err(Error::Numeric("density at the quantile must be positive".into()));
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("tau must lie in (0, 1), got {tau}")));
    }
    let mut xi = Vec::with_capacity(observations.len());
    for (k, (&x, &y)) in observations.iter().zip(trace).enumerate() {
        let gamma = cfg.gamma((k + 1) as u64)?;
        let width = cfg.a * gamma;
        // Z = tau - g(...), E(Z | past) = tau - G(Y): the tau terms cancel.
        xi.push(smoothed_cdf(law, y, width)? - ramp_scaled(y - x, width));
    }
    let xi_bar = xi.iter().sum::<f64>() / xi.len() as f64;
    Ok(BahadurTerms {
        residual: averaged - true_quantile - xi_bar / true_density_at_quantile,
        xi,
        xi_bar,
        averaged,
    })
}

/// Runs a single-level estimator from `initial` over `observations` and
/// returns its Bahadur decomposition against the known `law`.
pub fn bahadur_run(
    observations: &[f64],
    cfg: &ScheduleConfig,
    tau: f64,
    initial: f64,
    law: &Law,
) -> Result<BahadurTerms> {
    let mut y = initial;
    let mut avg = initial;
    let mut trace = Vec::with_capacity(observations.len());
    for (k, &x) in observations.iter().enumerate() {
        trace.push(y);
        let step = (k + 1) as u64;
        let gamma = cfg.gamma(step)?;
        y += gamma * (tau - ramp_scaled(y - x, cfg.a * gamma));
        avg = running_mean(avg, y, step);
    }
    let q = law.quantile(tau)?;
    bahadur_terms(observations, &trace, avg, cfg, tau, q, law.pdf(q), law)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemainderTerms {
    pub rho: f64,
    pub bound: f64,
}

impl RemainderTerms {
    pub fn holds(&self, slack: f64) -> bool {
        self.rho.abs() <= self.bound + slack
    }
}

/// Linearization remainder `rho = [F(Q) - G(Y)] + f(Q)(Y - Q)` of the smoothed
/// drift, with its bound `2 a c_f gamma + c_f (Y - Q)^2`.
///
/// `c_f` must dominate both `sup f` and `sup |f'|` of `law`.
pub fn remainder_rho(y: f64, q: f64, tau: f64, gamma: f64, a: f64, law: &Law, c_f: f64) -> Result<RemainderTerms> {
    if !(gamma > 0.0 && a > 0.0 && c_f > 0.0) {
        return Err(Error::Domain("gamma, a and c_f must be positive".into()));
    }
    if (law.cdf(q) - tau).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "{q} is not the {tau}-quantile of {}",
            law.name()
        )));
    }
    let g = smoothed_cdf(law, y, a * gamma)?;
    Ok(RemainderTerms {
        rho: (tau - g) + law.pdf(q) * (y - q),
        bound: 2.0 * a * c_f * gamma + c_f * (y - q).powi(2),
    })
}
