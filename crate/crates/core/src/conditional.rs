//! Local-constant streaming conditional quantiles at fixed design points.
//!
//! Each observation `(x, y)` moves the iterate at design point `x_i` by the
//! smoothed score scaled with the uniform-kernel weight `h^-1 K((x_i - x) / h)`.
//! Iterates far from `x` are left alone for that step but still enter the
//! running average, which is taken over all observations.

use serde::{Deserialize, Serialize};

use crate::density::{floor_density, gaussian_kde, gaussian_kde_2d, Bandwidth};
use crate::error::{Error, Result};
use crate::score::{smoothed_score, ScheduleConfig};
use crate::sgd_quantile::{running_mean, QuantileGrid};

/// `K(u) = 1/2` on `[-1, 1]`, zero elsewhere.
#[inline]
pub fn uniform_kernel(u: f64) -> f64 {
    if u.abs() <= 1.0 {
        0.5
    } else {
        0.0
    }
}

/// `int K(u)^2 du` for [`uniform_kernel`].
pub fn mu2_uniform() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalConfig {
    pub eval_points: Vec<f64>,
    pub bandwidth: f64,
    pub grid: QuantileGrid,
    pub schedule: ScheduleConfig,
}

impl ConditionalConfig {
    pub fn new(eval_points: Vec<f64>, bandwidth: f64, grid: QuantileGrid, schedule: ScheduleConfig) -> Result<Self> {
        let cfg = Self {
            eval_points,
            bandwidth,
            grid,
            schedule,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(Error::config(
                "bandwidth",
                format!("must be positive, got {}", self.bandwidth),
            ));
        }
        if self.eval_points.is_empty() {
            return Err(Error::config("eval_points", "need at least one evaluation point"));
        }
        if self.eval_points.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("eval_points", "evaluation points must be finite"));
        }
        let mut sorted = self.eval_points.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("eval_points", "evaluation points must be distinct"));
        }
        self.schedule.validate()
    }

    /// Kernel weight of an observation at `x` for design point `xi`.
    #[inline]
    pub fn weight(&self, xi: f64, x: f64) -> f64 {
        uniform_kernel((xi - x) / self.bandwidth) / self.bandwidth
    }

    /// Whether a single update provably preserves the ordering of levels.
    ///
    /// The ordering argument needs the largest kernel weight `1 / (2h)` to
    /// stay at or below `2a`, i.e. `a >= 1 / (4h)`. Below that threshold
    /// crossings are possible (rarely) in the first steps.
    pub fn guarantees_monotonicity(&self) -> bool {
        self.schedule.a >= 1.0 / (4.0 * self.bandwidth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalState {
    config: ConditionalConfig,
    step: u64,
    iterates: Vec<Vec<f64>>,
    averaged: Vec<Vec<f64>>,
}

impl ConditionalState {
    pub fn new(config: ConditionalConfig, initial_value: f64) -> Result<Self> {
        config.validate()?;
        if !initial_value.is_finite() {
            return Err(Error::config("initial_value", "must be finite"));
        }
        let iterates = vec![vec![initial_value; config.grid.len()]; config.eval_points.len()];
        Ok(Self {
            averaged: iterates.clone(),
            iterates,
            config,
            step: 0,
        })
    }

    pub fn config(&self) -> &ConditionalConfig {
        &self.config
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn iterates(&self) -> &[Vec<f64>] {
        &self.iterates
    }

    pub fn averaged(&self) -> &[Vec<f64>] {
        &self.averaged
    }

    pub fn update(&mut self, x: f64, y: f64) -> Result<()> {
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::input(format!("non-finite observation ({x}, {y})")));
        }
        let k = self.step + 1;
        let schedule = &self.config.schedule;
        let gamma = schedule.gamma_unchecked(k);
        let width = schedule.smoothing_width(gamma);
        for ((z_row, avg_row), &xi) in self
            .iterates
            .iter_mut()
            .zip(self.averaged.iter_mut())
            .zip(&self.config.eval_points)
        {
            let w = self.config.weight(xi, x);
            for ((z, zbar), &tau) in z_row.iter_mut().zip(avg_row.iter_mut()).zip(self.config.grid.levels()) {
                if w > 0.0 {
                    *z += gamma * smoothed_score(*z, y, tau, width) * w;
                }
                *zbar = running_mean(*zbar, *z, k);
            }
        }
        self.step = k;
        Ok(())
    }

    pub fn merge_stream<I: IntoIterator<Item = (f64, f64)>>(&mut self, pairs: I) -> Result<()> {
        for (idx, (x, y)) in pairs.into_iter().enumerate() {
            self.update(x, y).map_err(|e| e.at_index(idx))?;
        }
        Ok(())
    }
}

/// `max_{i,tau} (n h)^{1/2} (g(x_i) / mu2)^{1/2} f(m | x_i) |Zbar - m|`.
pub fn cond_test_statistic(
    state: &ConditionalState,
    null_surface: &[Vec<f64>],
    cond_sparsity: &[Vec<f64>],
    design_density: &[f64],
) -> Result<f64> {
    let p = state.config.eval_points.len();
    let m = state.config.grid.len();
    if state.step == 0 {
        return Err(Error::input("test statistic needs at least one observation"));
    }
    let shape_ok = |mat: &[Vec<f64>]| mat.len() == p && mat.iter().all(|r| r.len() == m);
    if !shape_ok(null_surface) || !shape_ok(cond_sparsity) || design_density.len() != p {
        return Err(Error::input(format!("null surface and densities must be {p} x {m}")));
    }
    if design_density
        .iter()
        .chain(cond_sparsity.iter().flatten())
        .any(|&v| !(v > 0.0 && v.is_finite()))
    {
        return Err(Error::Numeric("densities must be positive".into()));
    }
    let nh = state.step as f64 * state.config.bandwidth;
    let mu2 = mu2_uniform();
    let mut stat = 0.0f64;
    for (((zbar, null), f), &gx) in state
        .averaged
        .iter()
        .zip(null_surface)
        .zip(cond_sparsity)
        .zip(design_density)
    {
        let scale = (nh * gx / mu2).sqrt();
        for ((&z, &q), &fq) in zbar.iter().zip(null).zip(f) {
            stat = stat.max(scale * fq * (z - q).abs());
        }
    }
    Ok(stat)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct CondBandwidths {
    pub x: Bandwidth,
    pub y: Bandwidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondDensities {
    /// `g(x_i)`.
    pub design_density: Vec<f64>,
    /// `f(m(x_i, tau) | x_i)`, rows per design point.
    pub cond_sparsity: Vec<Vec<f64>>,
}

/// Kernel estimates of the design density at each `x_i` and of the
/// conditional density at each quantile estimate, the latter as the ratio of a
/// product-Gaussian joint density to the design density.
pub fn estimate_cond_densities(
    sample: &[(f64, f64)],
    eval_points: &[f64],
    quantile_estimates: &[Vec<f64>],
    bandwidths: CondBandwidths,
) -> Result<CondDensities> {
    if sample.len() < 2 {
        return Err(Error::input("conditional density estimation needs at least two pairs"));
    }
    if quantile_estimates.len() != eval_points.len() {
        return Err(Error::input(
            "one row of quantile estimates per evaluation point is required",
        ));
    }
    let xs: Vec<f64> = sample.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = sample.iter().map(|p| p.1).collect();
    let hx = bandwidths.x.resolve(&xs)?;
    let hy = bandwidths.y.resolve(&ys)?;
    let design_density: Vec<f64> = gaussian_kde(&xs, eval_points, hx)?
        .into_iter()
        .map(floor_density)
        .collect();
    let cond_sparsity = eval_points
        .iter()
        .zip(quantile_estimates)
        .zip(&design_density)
        .map(|((&xi, row), &gx)| {
            row.iter()
                .map(|&m| Ok(floor_density(gaussian_kde_2d(sample, xi, m, hx, hy)? / gx)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CondDensities {
        design_density,
        cond_sparsity,
    })
}
