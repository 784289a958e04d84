//! Simultaneous inference over series and quantile levels.
//!
//! The scaled deviation `sqrt(n) f(Q) (Ybar - Q)` of the averaged estimator is
//! approximated, jointly over the grid, by a centered Gaussian process whose
//! marginals per series are Brownian bridges. Critical values for the
//! sup-statistic come from simulating that process on the grid.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{floor_density, gaussian_kde, Bandwidth};
use crate::dist::Law;
use crate::error::{Error, Result};
use crate::oracle::order_index;
use crate::rng::stream_rng;
use crate::sgd_quantile::{QuantileGrid, QuantileState};

/// Smallest replication count accepted by the critical-value simulator.
pub const MIN_REPLICATIONS: usize = 1000;
pub const DEFAULT_REPLICATIONS: usize = 100_000;
/// Relative tolerance on negative eigenvalues when the Cholesky factorization fails.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Covariance `Cov(B_i(t), B_j(s))` with zero-based series indices.
pub type CovarianceFn = Arc<dyn Fn(usize, f64, usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct BridgeSpec {
    pub grid: QuantileGrid,
    pub series_count: usize,
    pub covariance: CovarianceFn,
    pub replications: usize,
    pub seed: u64,
}

impl fmt::Debug for BridgeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BridgeSpec")
            .field("grid", &self.grid)
            .field("series_count", &self.series_count)
            .field("replications", &self.replications)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

/// `min(s, t) (1 - max(s, t))`.
pub fn bridge_covariance(t: f64, s: f64) -> Result<f64> {
    if !(t > 0.0 && t < 1.0 && s > 0.0 && s < 1.0) {
        return Err(Error::Domain(format!(
            "bridge arguments must lie in (0, 1), got ({t}, {s})"
        )));
    }
    Ok(t.min(s) * (1.0 - t.max(s)))
}

/// Independent Brownian bridges, one per series.
pub fn independent_bridges_spec(grid: QuantileGrid, series_count: usize, replications: usize, seed: u64) -> BridgeSpec {
    BridgeSpec {
        grid,
        series_count,
        covariance: Arc::new(|i, t, j, s| if i == j { t.min(s) * (1.0 - t.max(s)) } else { 0.0 }),
        replications,
        seed,
    }
}

impl BridgeSpec {
    fn dim(&self) -> usize {
        self.series_count * self.grid.len()
    }

    /// Covariance matrix over `(series, level)` pairs, series-major.
    pub fn covariance_matrix(&self) -> Result<DMatrix<f64>> {
        let m = self.grid.len();
        let levels = self.grid.levels();
        let d = self.dim();
        let mut cov = DMatrix::zeros(d, d);
        for a in 0..d {
            for b in 0..=a {
                let (i, t) = (a / m, levels[a % m]);
                let (j, s) = (b / m, levels[b % m]);
                let v = (self.covariance)(i, t, j, s);
                let w = (self.covariance)(j, s, i, t);
                if !v.is_finite() {
                    return Err(Error::Numeric(format!(
                        "non-finite covariance at ({i}, {t}), ({j}, {s})"
                    )));
                }
                if (v - w).abs() > 1e-12 * (1.0 + v.abs()) {
                    return Err(Error::Numeric(format!(
                        "covariance is not symmetric at ({i}, {t}), ({j}, {s})"
                    )));
                }
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        Ok(cov)
    }

    fn validate(&self) -> Result<()> {
        if self.series_count == 0 {
            return Err(Error::config("series_count", "need at least one series"));
        }
        if self.replications < MIN_REPLICATIONS {
            return Err(Error::config(
                "replications",
                format!("at least {MIN_REPLICATIONS} required, got {}", self.replications),
            ));
        }
        Ok(())
    }
}

/// A factor `L` with `L L^T = Sigma`, used to draw `N(0, Sigma)` vectors.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: DMatrix<f64>,
}

impl GaussianSampler {
    /// Cholesky first; on failure, eigendecomposition with small negative
    /// eigenvalues clipped to zero.
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        if let Some(ch) = cov.clone().cholesky() {
            return Ok(Self { factor: ch.l() });
        }
        let eig = cov.symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if min < -PSD_TOLERANCE * max.max(0.0) || !(max >= 0.0) {
            return Err(Error::Numeric(format!(
                "covariance matrix is not positive semi-definite (eigenvalues in [{min:e}, {max:e}])"
            )));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
        Ok(Self { factor })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        &self.factor * z
    }
}

/// Sorted simulated values of `max |B|` over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSample {
    maxima: Vec<f64>,
}

impl ReferenceSample {
    pub fn from_values(mut maxima: Vec<f64>) -> Self {
        maxima.sort_by(f64::total_cmp);
        Self { maxima }
    }

    pub fn values(&self) -> &[f64] {
        &self.maxima
    }

    pub fn len(&self) -> usize {
        self.maxima.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maxima.is_empty()
    }

    /// Empirical `(1 - alpha)`-quantile (lower order statistic convention).
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        if self.maxima.is_empty() {
            return Err(Error::input("empty reference sample"));
        }
        Ok(self.maxima[order_index(self.maxima.len(), 1.0 - alpha)])
    }

    /// Empirical `p`-quantile of the reference maxima.
    pub fn quantile(&self, p: f64) -> f64 {
        self.maxima[order_index(self.maxima.len(), p)]
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Draws `count` process vectors; draw `r` uses stream `r` of `spec.seed`.
pub fn simulate_paths(spec: &BridgeSpec, count: usize) -> Result<Vec<DVector<f64>>> {
    let sampler = GaussianSampler::new(spec.covariance_matrix()?)?;
    Ok((0..count as u64)
        .into_par_iter()
        .map(|r| sampler.draw(&mut stream_rng(spec.seed, r)))
        .collect())
}

/// Simulates `max |B|` over the grid `spec.replications` times.
pub fn simulate_reference(spec: &BridgeSpec) -> Result<ReferenceSample> {
    spec.validate()?;
    let sampler = GaussianSampler::new(spec.covariance_matrix()?)?;
    let maxima: Vec<f64> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|r| {
            let v = sampler.draw(&mut stream_rng(spec.seed, r));
            v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
        })
        .collect();
    Ok(ReferenceSample::from_values(maxima))
}

pub fn simulate_critical_value(spec: &BridgeSpec, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    simulate_reference(spec)?.critical_value(alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparsityMode {
    Known,
    Kde,
}

/// Density at the quantile, per `(series, level)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityEstimate {
    pub values: Vec<Vec<f64>>,
    pub mode: SparsityMode,
    /// Per-series bandwidths when estimated.
    pub bandwidth: Option<Vec<f64>>,
}

impl SparsityEstimate {
    /// Exact sparsity `f_i(Q_i(tau))` from known laws, one per series.
    pub fn known(laws: &[Law], grid: &QuantileGrid) -> Result<Self> {
        let values = laws
            .iter()
            .map(|law| {
                grid.levels()
                    .iter()
                    .map(|&t| law.density_at_quantile(t))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            values,
            mode: SparsityMode::Known,
            bandwidth: None,
        })
    }

    /// Kernel estimate per series, evaluated at the given quantile points.
    pub fn kde(samples: &[Vec<f64>], quantile_points: &[Vec<f64>], bandwidth: Bandwidth) -> Result<Self> {
        if samples.len() != quantile_points.len() {
            return Err(Error::input("one sample per series is required"));
        }
        let mut values = Vec::with_capacity(samples.len());
        let mut hs = Vec::with_capacity(samples.len());
        for (sample, points) in samples.iter().zip(quantile_points) {
            let h = bandwidth.resolve(sample)?;
            values.push(estimate_sparsity_kde(sample, points, Bandwidth::Fixed(h))?);
            hs.push(h);
        }
        Ok(Self {
            values,
            mode: SparsityMode::Kde,
            bandwidth: Some(hs),
        })
    }

    fn check_shape(&self, p: usize, m: usize) -> Result<()> {
        if self.values.len() != p || self.values.iter().any(|r| r.len() != m) {
            return Err(Error::input(format!("sparsity must be {p} x {m}")));
        }
        if self.values.iter().flatten().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::Numeric("sparsity values must be positive".into()));
        }
        Ok(())
    }
}

/// Gaussian-kernel density of `sample` at each quantile point, floored at
/// [`crate::density::DENSITY_FLOOR`].
pub fn estimate_sparsity_kde(sample: &[f64], quantile_points: &[f64], bandwidth: Bandwidth) -> Result<Vec<f64>> {
    if sample.len() < 2 {
        return Err(Error::input("sparsity estimation needs at least two sample points"));
    }
    let h = bandwidth.resolve(sample)?;
    Ok(gaussian_kde(sample, quantile_points, h)?
        .into_iter()
        .map(floor_density)
        .collect())
}

fn check_matrix(name: &str, mat: &[Vec<f64>], p: usize, m: usize) -> Result<()> {
    if mat.len() != p || mat.iter().any(|r| r.len() != m) {
        return Err(Error::input(format!("{name} must be {p} x {m}")));
    }
    Ok(())
}

/// `max_{i,tau} sqrt(n) f_i(Q_i(tau)) |Ybar_i(tau) - Q_i(tau)|`.
pub fn test_statistic(state: &QuantileState, null_quantiles: &[Vec<f64>], sparsity: &SparsityEstimate) -> Result<f64> {
    let (p, m) = (state.series_count(), state.grid().len());
    if state.step() == 0 {
        return Err(Error::input("test statistic needs at least one observation"));
    }
    check_matrix("null quantiles", null_quantiles, p, m)?;
    sparsity.check_shape(p, m)?;
    let root_n = (state.step() as f64).sqrt();
    let mut stat = 0.0f64;
    for ((est, null), f) in state.averaged().iter().zip(null_quantiles).zip(&sparsity.values) {
        for ((&y, &q), &fq) in est.iter().zip(null).zip(f) {
            stat = stat.max(root_n * fq * (y - q).abs());
        }
    }
    Ok(stat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub series: usize,
    pub tau: f64,
    pub lo: f64,
    pub estimate: f64,
    pub hi: f64,
}

/// `Ybar -/+ c / (sqrt(n) f)` for every `(series, level)`.
pub fn uniform_bands(state: &QuantileState, sparsity: &SparsityEstimate, critical_value: f64) -> Result<Vec<Band>> {
    if !(critical_value >= 0.0) {
        return Err(Error::Domain(format!(
            "critical value must be non-negative, got {critical_value}"
        )));
    }
    if state.step() == 0 {
        return Err(Error::input("bands need at least one observation"));
    }
    sparsity.check_shape(state.series_count(), state.grid().len())?;
    let root_n = (state.step() as f64).sqrt();
    let mut bands = Vec::with_capacity(state.series_count() * state.grid().len());
    for (i, (est, f)) in state.averaged().iter().zip(&sparsity.values).enumerate() {
        for ((&y, &fq), &tau) in est.iter().zip(f).zip(state.grid().levels()) {
            let half = critical_value / (root_n * fq);
            bands.push(Band {
                series: i,
                tau,
                lo: y - half,
                estimate: y,
                hi: y + half,
            });
        }
    }
    Ok(bands)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceReport {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
    pub bands: Vec<Band>,
}

impl InferenceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn run_test(
    state: &QuantileState,
    null_quantiles: &[Vec<f64>],
    sparsity: &SparsityEstimate,
    spec: &BridgeSpec,
    alpha: f64,
) -> Result<InferenceReport> {
    let statistic = test_statistic(state, null_quantiles, sparsity)?;
    let critical_value = simulate_critical_value(spec, alpha)?;
    let bands = uniform_bands(state, sparsity, critical_value)?;
    Ok(InferenceReport {
        statistic,
        critical_value,
        alpha,
        reject: statistic > critical_value,
        bands,
    })
}
