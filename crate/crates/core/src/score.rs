//! Smoothed quantile score and learning-rate schedule.
//!
//! The indicator `1{y - x >= 0}` of the plain SGD quantile recursion is replaced
//! by the ramp [`g`], rescaled to width `a * gamma_k` at step `k`. The ramp is the
//! CDF of a uniform kernel on `[-1, 1]`, so the resulting update is the gradient
//! of a convolution-smoothed check loss whose bandwidth shrinks with the step size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper end of the decay-exponent range for which the Bahadur representation
/// and the Gaussian approximation hold: `(1 + sqrt 5) / 4`.
pub const BETA_INFERENCE_MAX: f64 = 0.809_016_994_374_947_5;

/// Learning-rate law `gamma_k = c_gamma * k^(-beta)` and smoothing multiple `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub c_gamma: f64,
    pub beta: f64,
    pub a: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            c_gamma: 1.0,
            beta: 0.7,
            a: 1.0,
        }
    }
}

impl ScheduleConfig {
    pub fn new(c_gamma: f64, beta: f64, a: f64) -> Result<Self> {
        let cfg = Self { c_gamma, beta, a };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_beta(beta: f64) -> Result<Self> {
        Self::new(1.0, beta, 1.0)
    }

    /// Checks the hard constraints. A `beta` above [`BETA_INFERENCE_MAX`] is
    /// accepted; see [`ScheduleConfig::inference_guaranteed`].
    pub fn validate(&self) -> Result<()> {
        if !(self.c_gamma.is_finite() && self.c_gamma > 0.0) {
            return Err(Error::config(
                "c_gamma",
                format!("must be positive, got {}", self.c_gamma),
            ));
        }
        if !(self.beta > 0.5 && self.beta < 1.0) {
            return Err(Error::config(
                "beta",
                format!("must lie in (0.5, 1), got {}", self.beta),
            ));
        }
        if !(self.a.is_finite() && self.a > 0.5) {
            return Err(Error::config("a", format!("must exceed 0.5, got {}", self.a)));
        }
        if !self.inference_guaranteed() {
            log::warn!(
                "beta = {} exceeds {:.4}; tail bounds hold but the Gaussian approximation is not guaranteed",
                self.beta,
                BETA_INFERENCE_MAX
            );
        }
        Ok(())
    }

    /// Whether `beta` lies in the range where the Gaussian approximation holds.
    pub fn inference_guaranteed(&self) -> bool {
        self.beta < BETA_INFERENCE_MAX
    }

    /// Learning rate for the `k`-th update (`k >= 1`).
    pub fn gamma(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(Error::Domain("learning rate index must be >= 1".into()));
        }
        Ok(self.gamma_unchecked(k))
    }

    #[inline]
    pub(crate) fn gamma_unchecked(&self, k: u64) -> f64 {
        self.c_gamma * (k as f64).powf(-self.beta)
    }

    /// Half-width `a * gamma_k` of the smoothing ramp at step `k`.
    #[inline]
    pub(crate) fn smoothing_width(&self, gamma: f64) -> f64 {
        self.a * gamma
    }
}

/// Free-function form of [`ScheduleConfig::gamma`].
pub fn gamma(cfg: &ScheduleConfig, k: u64) -> Result<f64> {
    cfg.gamma(k)
}

/// Piecewise-linear ramp: 0 below -1, `(x + 1) / 2` on `[-1, 1)`, 1 from 1 on.
pub fn g(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("score argument must be finite, got {x}")));
    }
    Ok(ramp(x))
}

/// `g(x / k)`, Lipschitz with constant `1 / (2k)`.
pub fn g_scaled(x: f64, k: f64) -> Result<f64> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Domain(format!("scale must be positive, got {k}")));
    }
    g(x / k)
}

#[inline]
pub(crate) fn ramp(x: f64) -> f64 {
    if x >= 1.0 {
        1.0
    } else if x >= -1.0 {
        (x + 1.0) / 2.0
    } else {
        0.0
    }
}

#[inline]
pub(crate) fn ramp_scaled(x: f64, width: f64) -> f64 {
    ramp(x / width)
}

/// Smoothed score increment `tau - g_width(current - obs)`; lies in `[-1, 1]`.
#[inline]
pub(crate) fn smoothed_score(current: f64, obs: f64, tau: f64, width: f64) -> f64 {
    tau - ramp_scaled(current - obs, width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ramp_values() {
        assert_eq!(g(1.5).unwrap(), 1.0);
        assert_eq!(g(1.0).unwrap(), 1.0);
        assert_eq!(g(0.0).unwrap(), 0.5);
        assert_eq!(g(-1.0).unwrap(), 0.0);
        assert_eq!(g(-3.0).unwrap(), 0.0);
        assert!(g(f64::NAN).is_err());
        assert!(g(f64::INFINITY).is_err());
    }

    #[test]
    fn scaled_ramp_values() {
        assert_eq!(g_scaled(0.5, 0.5).unwrap(), 1.0);
        assert_eq!(g_scaled(0.0, 2.0).unwrap(), 0.5);
        assert_abs_diff_eq!(g_scaled(-0.25, 0.5).unwrap(), 0.25, epsilon = 1e-15);
        assert!(g_scaled(1.0, 0.0).is_err());
        assert!(g_scaled(1.0, -1.0).is_err());
    }

    #[test]
    fn gamma_values() {
        let cfg = ScheduleConfig::new(1.0, 0.7, 1.0).unwrap();
        assert_eq!(cfg.gamma(1).unwrap(), 1.0);
        assert!(cfg.gamma(0).is_err());
        let half = ScheduleConfig::new(0.5, 0.7, 1.0).unwrap();
        assert_eq!(gamma(&half, 1).unwrap(), 0.5);
        // 100^-0.7 = 10^-1.4
        assert_abs_diff_eq!(cfg.gamma(100).unwrap(), 10f64.powf(-1.4), epsilon = 1e-15);
        assert_abs_diff_eq!(cfg.gamma(100).unwrap(), 0.0398, epsilon = 1e-4);
    }

    #[test]
    fn config_validation() {
        assert!(ScheduleConfig::new(0.0, 0.7, 1.0).is_err());
        assert!(ScheduleConfig::new(1.0, 0.5, 1.0).is_err());
        assert!(ScheduleConfig::new(1.0, 1.0, 1.0).is_err());
        assert!(ScheduleConfig::new(1.0, 0.7, 0.5).is_err());
        let loose = ScheduleConfig::new(1.0, 0.9, 1.0).unwrap();
        assert!(!loose.inference_guaranteed());
        assert!(ScheduleConfig::default().inference_guaranteed());
        match ScheduleConfig::new(1.0, 1.2, 1.0) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "beta"),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn ramp_monotone(x in -5.0f64..5.0, d in 0.0f64..5.0) {
            prop_assert!(g(x).unwrap() <= g(x + d).unwrap());
        }

        #[test]
        fn ramp_range_and_symmetry(x in -5.0f64..5.0) {
            let v = g(x).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            if x.abs() <= 1.0 {
                prop_assert!((v - (1.0 - g(-x).unwrap())).abs() < 1e-15);
            }
        }

        #[test]
        fn scaled_ramp_lipschitz(x in -3.0f64..3.0, y in -3.0f64..3.0, k in 0.01f64..4.0) {
            let lhs = (g_scaled(x, k).unwrap() - g_scaled(y, k).unwrap()).abs();
            prop_assert!(lhs <= (x - y).abs() / (2.0 * k) + 1e-12);
        }

        #[test]
        fn gamma_strictly_decreasing(k in 1u64..1_000_000, c in 0.01f64..10.0, beta in 0.51f64..0.99) {
            let cfg = ScheduleConfig::new(c, beta, 1.0).unwrap();
            prop_assert!(cfg.gamma(k + 1).unwrap() < cfg.gamma(k).unwrap());
        }
    }
}
