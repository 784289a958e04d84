//! Known data laws used as null hypotheses, quadrature targets and generators.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT as TSampler};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// A continuous univariate law with closed-form CDF and density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum Law {
    Normal { mean: f64, sd: f64 },
    StudentT { df: f64 },
}

impl Law {
    pub fn standard_normal() -> Self {
        Law::Normal { mean: 0.0, sd: 1.0 }
    }

    pub fn student_t(df: f64) -> Result<Self> {
        if !(df > 0.0 && df.is_finite()) {
            return Err(Error::config(
                "df",
                format!("degrees of freedom must be positive, got {df}"),
            ));
        }
        Ok(Law::StudentT { df })
    }

    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite() && mean.is_finite()) {
            return Err(Error::config(
                "sd",
                format!("need finite mean and positive sd, got ({mean}, {sd})"),
            ));
        }
        Ok(Law::Normal { mean, sd })
    }

    /// Parses `normal`, `t10`, `t:10` or `student_t:10`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim().to_ascii_lowercase();
        if t == "normal" || t == "gaussian" || t == "standard_normal" {
            return Ok(Self::standard_normal());
        }
        let df = t
            .strip_prefix("student_t:")
            .or_else(|| t.strip_prefix("t:"))
            .or_else(|| t.strip_prefix('t'))
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::config("distribution", format!("unknown law `{text}`")))?;
        Self::student_t(df)
    }

    pub fn name(&self) -> String {
        match *self {
            Law::Normal { mean, sd } if mean == 0.0 && sd == 1.0 => "normal".into(),
            Law::Normal { mean, sd } => format!("normal({mean},{sd})"),
            Law::StudentT { df } => format!("t{df}"),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Law::Normal { mean, sd } => std_normal().cdf((x - mean) / sd),
            Law::StudentT { df } => t_law(df).cdf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Law::Normal { mean, sd } => std_normal().pdf((x - mean) / sd) / sd,
            Law::StudentT { df } => t_law(df).pdf(x),
        }
    }

    /// Quantile function, polished by Newton steps on the CDF so that the
    /// absolute error stays well below `1e-8` in the central range.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("probability must lie in (0, 1), got {p}")));
        }
        let mut q = match *self {
            Law::Normal { mean, sd } => mean + sd * std_normal().inverse_cdf(p),
            Law::StudentT { df } => t_law(df).inverse_cdf(p),
        };
        for _ in 0..3 {
            let f = self.pdf(q);
            if !(f > 0.0) {
                break;
            }
            let step = (self.cdf(q) - p) / f;
            if !step.is_finite() {
                break;
            }
            q -= step;
            if step.abs() < 1e-15 * (1.0 + q.abs()) {
                break;
            }
        }
        Ok(q)
    }

    /// Density at the `p`-quantile (the sparsity value).
    pub fn density_at_quantile(&self, p: f64) -> Result<f64> {
        Ok(self.pdf(self.quantile(p)?))
    }

    /// An upper bound on both `sup |f|` and `sup |f'|`.
    pub fn density_bound(&self) -> f64 {
        match *self {
            Law::Normal { sd, .. } => {
                // sup f = 1/(sd sqrt(2 pi)); sup |f'| = phi(1) / sd^2
                let sup_f = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
                let sup_df = std_normal().pdf(1.0) / (sd * sd);
                sup_f.max(sup_df)
            }
            Law::StudentT { df } => {
                // f'(x) = -f(x) (df + 1) x / (df + x^2), maximal at x = sqrt(df / (df + 2)).
                let sup_f = self.pdf(0.0);
                let x = (df / (df + 2.0)).sqrt();
                let sup_df = self.pdf(x) * (df + 1.0) * x / (df + x * x);
                sup_f.max(sup_df)
            }
        }
    }

    /// Variance when finite.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            Law::Normal { sd, .. } => Some(sd * sd),
            Law::StudentT { df } if df > 2.0 => Some(df / (df - 2.0)),
            Law::StudentT { .. } => None,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Law::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Law::StudentT { df } => TSampler::new(df).expect("validated df").sample(rng),
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

fn t_law(df: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, df).expect("validated df")
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64> {
    Law::standard_normal().quantile(p)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tabulated_normal_quantiles() {
        assert_abs_diff_eq!(normal_quantile(0.975).unwrap(), 1.959_963_984_540_054, epsilon = 1e-10);
        assert_abs_diff_eq!(normal_quantile(0.9).unwrap(), 1.281_551_565_544_600_5, epsilon = 1e-10);
        assert_abs_diff_eq!(normal_quantile(0.5).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(normal_quantile(0.1).unwrap(), -1.281_551_565_544_600_5, epsilon = 1e-10);
    }

    #[test]
    fn tabulated_t10_quantiles() {
        let t = Law::student_t(10.0).unwrap();
        // scipy.stats.t.ppf([0.9, 0.975, 0.6], 10)
        assert_abs_diff_eq!(t.quantile(0.9).unwrap(), 1.372_183_641_110_286_3, epsilon = 1e-9);
        assert_abs_diff_eq!(t.quantile(0.975).unwrap(), 2.228_138_851_964_938_5, epsilon = 1e-9);
        assert_abs_diff_eq!(t.quantile(0.6).unwrap(), 0.260_184_829_492_080_05, epsilon = 1e-9);
        assert_abs_diff_eq!(t.quantile(0.1).unwrap(), -1.372_183_641_110_286_3, epsilon = 1e-9);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for law in [
            Law::standard_normal(),
            Law::student_t(10.0).unwrap(),
            Law::normal(1.0, 0.3).unwrap(),
        ] {
            for i in 1..100 {
                let p = i as f64 / 100.0;
                let q = law.quantile(p).unwrap();
                assert!((law.cdf(q) - p).abs() < 1e-12, "{law:?} p={p}");
            }
        }
        assert!(Law::standard_normal().quantile(0.0).is_err());
        assert!(Law::standard_normal().quantile(1.0).is_err());
    }

    #[test]
    fn density_bounds_dominate_grid_scan() {
        for law in [
            Law::standard_normal(),
            Law::student_t(10.0).unwrap(),
            Law::normal(0.0, 0.5).unwrap(),
        ] {
            let bound = law.density_bound();
            let h = 1e-5;
            for i in -4000..4000 {
                let x = i as f64 * 0.002;
                let df = (law.pdf(x + h) - law.pdf(x - h)) / (2.0 * h);
                assert!(law.pdf(x) <= bound + 1e-12);
                assert!(df.abs() <= bound + 1e-6);
            }
        }
    }

    #[test]
    fn parsing() {
        assert_eq!(Law::parse("normal").unwrap(), Law::standard_normal());
        assert_eq!(Law::parse("t10").unwrap(), Law::StudentT { df: 10.0 });
        assert_eq!(Law::parse("t:5").unwrap(), Law::StudentT { df: 5.0 });
        assert!(Law::parse("cauchy").is_err());
        assert!(Law::parse("t-1").is_err());
    }
}
