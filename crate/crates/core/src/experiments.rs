//! Monte Carlo harness: empirical size tables, QQ data, tail-frequency curves
//! and the conditional-quantile study.
//!
//! Replication `r` of a plan draws from stream `r` of the plan seed, and the
//! reference law of the sup-statistic is simulated once per plan from a
//! derived seed. Replications run in parallel; results are collected in
//! replication order, so parallel and serial runs agree exactly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::{
    cond_test_statistic, estimate_cond_densities, CondBandwidths, ConditionalConfig, ConditionalState,
};
use crate::density::Bandwidth;
use crate::dist::{normal_pdf, normal_quantile, Law};
use crate::error::{Error, Result};
use crate::inference::{
    independent_bridges_spec, simulate_reference, test_statistic, ReferenceSample, SparsityEstimate, SparsityMode,
    DEFAULT_REPLICATIONS,
};
use crate::oracle::order_index;
use crate::rng::{derive_seed, stream_rng, StreamRng};
use crate::score::ScheduleConfig;
use crate::sgd_quantile::{EstimateMode, QuantileGrid, QuantileState};

const REFERENCE_SALT: u64 = 0x5EF0_0001;

/// Data-generating process of a study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dgp {
    StandardNormal,
    StudentT {
        df: f64,
    },
    /// `X ~ U[0, 1]`, `Y | X = x ~ N(0, x)`.
    CondNormalVarianceX,
}

impl Dgp {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "cond_normal_variance_x" | "conditional" => Ok(Dgp::CondNormalVarianceX),
            other => match Law::parse(other)? {
                Law::StudentT { df } => Ok(Dgp::StudentT { df }),
                _ => Ok(Dgp::StandardNormal),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            Dgp::StandardNormal => "normal".into(),
            Dgp::StudentT { df } => format!("t{df}"),
            Dgp::CondNormalVarianceX => "cond_normal_variance_x".into(),
        }
    }

    /// Marginal law of a univariate DGP.
    pub fn law(&self) -> Result<Law> {
        match *self {
            Dgp::StandardNormal => Ok(Law::standard_normal()),
            Dgp::StudentT { df } => Law::student_t(df),
            Dgp::CondNormalVarianceX => Err(Error::config("dgp", "conditional DGP has no single marginal law")),
        }
    }

    /// Draws one `(x, y)` pair of the conditional design.
    pub fn sample_pair(rng: &mut StreamRng) -> (f64, f64) {
        use rand::Rng;
        let x: f64 = rng.random();
        let z = Law::standard_normal().sample(rng);
        (x, x.sqrt() * z)
    }

    /// `m(x, tau) = sqrt(x) Phi^-1(tau)`.
    pub fn cond_quantile(x: f64, tau: f64) -> Result<f64> {
        Ok(x.sqrt() * normal_quantile(tau)?)
    }

    /// Density of `N(0, x)` at `m(x, tau)`.
    pub fn cond_sparsity(x: f64, tau: f64) -> Result<f64> {
        Ok(normal_pdf(normal_quantile(tau)?) / x.sqrt())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dgp: Dgp,
    pub n: usize,
    pub replications: usize,
    pub schedule: ScheduleConfig,
    pub initial_value: f64,
    pub grid: QuantileGrid,
    pub sparsity_mode: SparsityMode,
    pub alpha_levels: Vec<f64>,
    pub seed: u64,
    /// Draws of the reference sup-statistic.
    pub reference_replications: usize,
    /// Re-simulate the reference law in every replication instead of sharing it.
    pub resimulate_reference: bool,
    /// Design points of the conditional study.
    pub eval_points: Vec<f64>,
    /// Kernel bandwidth of the conditional study.
    pub h: f64,
}

impl ExperimentPlan {
    /// Unconditional size study on the decile grid with `alpha in {.15, .1, .05, .01}`.
    pub fn size_study(dgp: Dgp, n: usize, beta: f64, sparsity_mode: SparsityMode, seed: u64) -> Result<Self> {
        Ok(Self {
            dgp,
            n,
            replications: 1000,
            schedule: ScheduleConfig::with_beta(beta)?,
            initial_value: 0.0,
            grid: QuantileGrid::deciles(),
            sparsity_mode,
            alpha_levels: vec![0.15, 0.10, 0.05, 0.01],
            seed,
            reference_replications: DEFAULT_REPLICATIONS,
            resimulate_reference: false,
            eval_points: Vec::new(),
            h: 0.2,
        })
    }

    /// Conditional study: design points `{.2, .4, .6, .8}`, `h = 0.2`, deciles.
    pub fn conditional_study(n: usize, sparsity_mode: SparsityMode, seed: u64) -> Result<Self> {
        Ok(Self {
            eval_points: vec![0.2, 0.4, 0.6, 0.8],
            ..Self::size_study(Dgp::CondNormalVarianceX, n, 0.7, sparsity_mode, seed)?
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "sample size must be positive"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications", "need at least one replication"));
        }
        if self.alpha_levels.is_empty() || self.alpha_levels.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::config("alpha", "levels must lie strictly between 0 and 1"));
        }
        if !self.initial_value.is_finite() {
            return Err(Error::config("initial_value", "must be finite"));
        }
        self.schedule.validate()?;
        if self.dgp == Dgp::CondNormalVarianceX {
            if self.eval_points.is_empty() || self.eval_points.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
                return Err(Error::config(
                    "eval_points",
                    "conditional design points must lie in (0, 1]",
                ));
            }
            if !(self.h > 0.0) {
                return Err(Error::config("h", "bandwidth must be positive"));
            }
        }
        Ok(())
    }

    fn series_points(&self) -> usize {
        if self.dgp == Dgp::CondNormalVarianceX {
            self.eval_points.len()
        } else {
            1
        }
    }

    fn reference_for(&self, salt: u64) -> Result<ReferenceSample> {
        let spec = independent_bridges_spec(
            self.grid.clone(),
            self.series_points(),
            self.reference_replications,
            derive_seed(self.seed, salt),
        );
        simulate_reference(&spec)
    }

    /// The shared reference sample of `max |B|`.
    pub fn reference(&self) -> Result<ReferenceSample> {
        self.reference_for(REFERENCE_SALT)
    }

    fn conditional_config(&self) -> Result<ConditionalConfig> {
        ConditionalConfig::new(self.eval_points.clone(), self.h, self.grid.clone(), self.schedule)
    }
}

/// Empirical rejection rates for one `(dgp, n, beta)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub dgp: String,
    pub n: usize,
    pub beta: f64,
    pub sparsity: SparsityMode,
    pub rejections: Vec<usize>,
    pub rates: Vec<f64>,
    pub mc_se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub alphas: Vec<f64>,
    pub replications: usize,
    pub rows: Vec<CoverageRow>,
}

/// `sqrt(rate (1 - rate) / replications)`.
pub fn mc_standard_error(rate: f64, replications: usize) -> f64 {
    (rate * (1.0 - rate) / replications as f64).sqrt()
}

impl CoverageTable {
    fn single(plan: &ExperimentPlan, statistics: &[f64], critical: &[Vec<f64>]) -> Self {
        let reps = statistics.len();
        let rejections: Vec<usize> = (0..plan.alpha_levels.len())
            .map(|a| statistics.iter().zip(critical).filter(|(s, c)| **s > c[a]).count())
            .collect();
        let rates: Vec<f64> = rejections.iter().map(|&r| r as f64 / reps as f64).collect();
        let mc_se = rates.iter().map(|&r| mc_standard_error(r, reps)).collect();
        CoverageTable {
            alphas: plan.alpha_levels.clone(),
            replications: reps,
            rows: vec![CoverageRow {
                dgp: plan.dgp.name(),
                n: plan.n,
                beta: plan.schedule.beta,
                sparsity: plan.sparsity_mode,
                rejections,
                rates,
                mc_se,
            }],
        }
    }

    /// Appends the rows of `other`; alpha columns and replication counts must agree.
    pub fn merge(&mut self, other: CoverageTable) -> Result<()> {
        if self.alphas != other.alphas || self.replications != other.replications {
            return Err(Error::input(
                "coverage tables have different columns or replication counts",
            ));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    pub fn rate(&self, n: usize, beta: f64, alpha: f64) -> Option<f64> {
        let col = self.alphas.iter().position(|&a| a == alpha)?;
        self.rows
            .iter()
            .find(|r| r.n == n && r.beta == beta)
            .map(|r| r.rates[col])
    }
}

fn critical_values(reference: &ReferenceSample, alphas: &[f64]) -> Result<Vec<f64>> {
    alphas.iter().map(|&a| reference.critical_value(a)).collect()
}

/// Sup-statistic of one unconditional replication.
fn unconditional_statistic(plan: &ExperimentPlan, law: &Law, rng: &mut StreamRng) -> Result<f64> {
    let sample = law.sample_n(rng, plan.n);
    let mut state = QuantileState::init(1, plan.grid.clone(), plan.schedule, vec![plan.initial_value])?;
    for &x in &sample {
        state.update(&[x])?;
    }
    let null: Vec<f64> = plan
        .grid
        .levels()
        .iter()
        .map(|&t| law.quantile(t))
        .collect::<Result<_>>()?;
    let sparsity = match plan.sparsity_mode {
        SparsityMode::Known => SparsityEstimate::known(&[*law], &plan.grid)?,
        SparsityMode::Kde => SparsityEstimate::kde(
            &[sample],
            &state.estimates(EstimateMode::Averaged),
            Bandwidth::Silverman,
        )?,
    };
    test_statistic(&state, &[null], &sparsity)
}

/// Sup-statistic of one conditional replication.
fn conditional_statistic(plan: &ExperimentPlan, cfg: &ConditionalConfig, rng: &mut StreamRng) -> Result<f64> {
    let sample: Vec<(f64, f64)> = (0..plan.n).map(|_| Dgp::sample_pair(rng)).collect();
    let mut state = ConditionalState::new(cfg.clone(), plan.initial_value)?;
    state.merge_stream(sample.iter().copied())?;
    let levels = plan.grid.levels();
    let null: Vec<Vec<f64>> = plan
        .eval_points
        .iter()
        .map(|&x| levels.iter().map(|&t| Dgp::cond_quantile(x, t)).collect::<Result<_>>())
        .collect::<Result<_>>()?;
    let (sparsity, design) = match plan.sparsity_mode {
        SparsityMode::Known => {
            let f: Vec<Vec<f64>> = plan
                .eval_points
                .iter()
                .map(|&x| levels.iter().map(|&t| Dgp::cond_sparsity(x, t)).collect::<Result<_>>())
                .collect::<Result<_>>()?;
            (f, vec![1.0; plan.eval_points.len()])
        }
        SparsityMode::Kde => {
            let est = estimate_cond_densities(&sample, &plan.eval_points, state.averaged(), CondBandwidths::default())?;
            (est.cond_sparsity, est.design_density)
        }
    };
    cond_test_statistic(&state, &null, &sparsity, &design)
}

/// Sup-statistics of all replications, in replication order.
pub fn replication_statistics(plan: &ExperimentPlan) -> Result<Vec<f64>> {
    plan.validate()?;
    let law = match plan.dgp {
        Dgp::CondNormalVarianceX => None,
        other => Some(other.law()?),
    };
    let cond_cfg = match plan.dgp {
        Dgp::CondNormalVarianceX => Some(plan.conditional_config()?),
        _ => None,
    };
    (0..plan.replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(plan.seed, r as u64);
            match (&law, &cond_cfg) {
                (Some(law), _) => unconditional_statistic(plan, law, &mut rng),
                (None, Some(cfg)) => conditional_statistic(plan, cfg, &mut rng),
                (None, None) => unreachable!("validated plan has a law or a conditional design"),
            }
            .map_err(|e| e.at_index(r))
        })
        .collect()
}

fn size_table(plan: &ExperimentPlan) -> Result<CoverageTable> {
    let stats = replication_statistics(plan)?;
    let critical: Vec<Vec<f64>> = if plan.resimulate_reference {
        (0..plan.replications)
            .into_par_iter()
            .map(|r| critical_values(&plan.reference_for(REFERENCE_SALT + 1 + r as u64)?, &plan.alpha_levels))
            .collect::<Result<_>>()?
    } else {
        vec![critical_values(&plan.reference()?, &plan.alpha_levels)?; plan.replications]
    };
    Ok(CoverageTable::single(plan, &stats, &critical))
}

/// Empirical size of the simultaneous test under the true null.
pub fn run_coverage(plan: &ExperimentPlan) -> Result<CoverageTable> {
    if plan.dgp == Dgp::CondNormalVarianceX {
        return Err(Error::config(
            "dgp",
            "use run_conditional_coverage for the conditional design",
        ));
    }
    size_table(plan)
}

/// Empirical size of the conditional-quantile test over design points and levels.
pub fn run_conditional_coverage(plan: &ExperimentPlan) -> Result<CoverageTable> {
    if plan.dgp != Dgp::CondNormalVarianceX {
        return Err(Error::config(
            "dgp",
            "conditional coverage needs the conditional design",
        ));
    }
    size_table(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub empirical: f64,
    pub reference: f64,
}

/// Pairs equal-rank quantiles of two samples at `len` evenly spaced levels.
pub fn qq_pairs(empirical: &[f64], reference: &[f64], len: usize) -> Vec<QqPoint> {
    let mut e = empirical.to_vec();
    let mut r = reference.to_vec();
    e.sort_by(f64::total_cmp);
    r.sort_by(f64::total_cmp);
    (0..len)
        .map(|i| {
            let p = (i as f64 + 0.5) / len as f64;
            QqPoint {
                empirical: e[order_index(e.len(), p)],
                reference: r[order_index(r.len(), p)],
            }
        })
        .collect()
}

/// QQ data of replication statistics against the simulated reference law.
/// The number of points is `min(replications, reference size)`.
pub fn run_qq(plan: &ExperimentPlan) -> Result<Vec<QqPoint>> {
    let stats = replication_statistics(plan)?;
    let reference = plan.reference()?;
    let len = stats.len().min(reference.len());
    Ok(qq_pairs(&stats, reference.values(), len))
}

/// Quantile of a sample (lower order statistic convention).
pub fn sample_quantile_of(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v[order_index(v.len(), p)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub x: f64,
    pub averaged: f64,
    pub raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub dgp: String,
    pub n: usize,
    pub tau: f64,
    pub replications: usize,
    pub points: Vec<TailPoint>,
}

impl TailCurve {
    /// Monte Carlo standard error of a tail frequency.
    pub fn mc_se(&self, freq: f64) -> f64 {
        mc_standard_error(freq, self.replications)
    }
}

/// Empirical `P(|Ybar_n - Q| > x)` and `P(|Y_n - Q| > x)` over `x_values`.
pub fn run_tail_curve(
    dgp: Dgp,
    n: usize,
    tau: f64,
    x_values: &[f64],
    replications: usize,
    cfg: &ScheduleConfig,
    seed: u64,
) -> Result<TailCurve> {
    if x_values.iter().any(|&x| !(x >= 0.0)) || x_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config(
            "x",
            "tail thresholds must be non-negative and increasing",
        ));
    }
    if replications == 0 || n == 0 {
        return Err(Error::config("replications", "need positive n and replications"));
    }
    let law = dgp.law()?;
    let q = law.quantile(tau)?;
    let grid = QuantileGrid::new(vec![tau])?;
    let deviations: Vec<(f64, f64)> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let mut state = QuantileState::univariate(grid.clone(), *cfg)?;
            for _ in 0..n {
                state.update(&[law.sample(&mut rng)])?;
            }
            Ok(((state.averaged()[0][0] - q).abs(), (state.raw()[0][0] - q).abs()))
        })
        .collect::<Result<_>>()?;
    let reps = replications as f64;
    let points = x_values
        .iter()
        .map(|&x| TailPoint {
            x,
            averaged: deviations.iter().filter(|d| d.0 > x).count() as f64 / reps,
            raw: deviations.iter().filter(|d| d.1 > x).count() as f64 / reps,
        })
        .collect();
    Ok(TailCurve {
        dgp: dgp.name(),
        n,
        tau,
        replications,
        points,
    })
}

/// Published empirical sizes, used for side-by-side output.
#[allow(clippy::approx_constant)]
pub mod published {
    /// Alpha columns of the size tables.
    pub const ALPHAS: [f64; 4] = [0.15, 0.10, 0.05, 0.01];

    /// Gaussian data, known sparsity: `(n, beta, [size at ALPHAS])`.
    pub const GAUSSIAN_KNOWN: [(usize, f64, [f64; 4]); 18] = [
        (100, 0.6, [0.127, 0.098, 0.055, 0.017]),
        (250, 0.6, [0.104, 0.068, 0.037, 0.007]),
        (500, 0.6, [0.118, 0.081, 0.054, 0.012]),
        (1000, 0.6, [0.093, 0.068, 0.038, 0.006]),
        (2000, 0.6, [0.121, 0.084, 0.038, 0.006]),
        (4000, 0.6, [0.112, 0.073, 0.044, 0.007]),
        (100, 0.7, [0.193, 0.131, 0.069, 0.017]),
        (250, 0.7, [0.190, 0.139, 0.080, 0.023]),
        (500, 0.7, [0.198, 0.138, 0.078, 0.013]),
        (1000, 0.7, [0.179, 0.120, 0.066, 0.016]),
        (2000, 0.7, [0.160, 0.096, 0.048, 0.016]),
        (4000, 0.7, [0.158, 0.108, 0.055, 0.016]),
        (100, 0.8, [0.333, 0.246, 0.156, 0.056]),
        (250, 0.8, [0.438, 0.318, 0.187, 0.056]),
        (500, 0.8, [0.451, 0.347, 0.225, 0.073]),
        (1000, 0.8, [0.441, 0.339, 0.233, 0.087]),
        (2000, 0.8, [0.456, 0.343, 0.211, 0.074]),
        (4000, 0.8, [0.395, 0.292, 0.183, 0.050]),
    ];

    /// Estimated (kernel) sparsity, `beta = 0.7`: `(dgp, n, [size at ALPHAS])`.
    pub const KDE: [(&str, usize, [f64; 4]); 8] = [
        ("normal", 1000, [0.216, 0.165, 0.083, 0.023]),
        ("normal", 2000, [0.181, 0.121, 0.064, 0.020]),
        ("normal", 4000, [0.166, 0.107, 0.058, 0.010]),
        ("normal", 8000, [0.162, 0.117, 0.067, 0.009]),
        ("t10", 1000, [0.262, 0.198, 0.110, 0.031]),
        ("t10", 2000, [0.220, 0.141, 0.070, 0.020]),
        ("t10", 4000, [0.166, 0.116, 0.062, 0.014]),
        ("t10", 8000, [0.155, 0.106, 0.060, 0.014]),
    ];

    pub fn gaussian_known(n: usize, beta: f64, alpha: f64) -> Option<f64> {
        let col = ALPHAS.iter().position(|&a| a == alpha)?;
        GAUSSIAN_KNOWN
            .iter()
            .find(|(m, b, _)| *m == n && (*b - beta).abs() < 1e-12)
            .map(|(_, _, v)| v[col])
    }

    pub fn kde(dgp: &str, n: usize, alpha: f64) -> Option<f64> {
        let col = ALPHAS.iter().position(|&a| a == alpha)?;
        KDE.iter()
            .find(|(d, m, _)| *d == dgp && *m == n)
            .map(|(_, _, v)| v[col])
    }
}
