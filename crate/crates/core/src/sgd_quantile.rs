//! Streaming estimator for several quantile levels of several series.
//!
//! Every `(series, level)` pair carries a raw smoothed-SGD iterate and its
//! Polyak-Ruppert running mean. Because the smoothing ramp has Lipschitz
//! constant `1 / (2 a gamma_k)` with `a > 1/2`, one update can never swap the
//! order of two levels, so the estimated quantile curves never cross.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::score::{smoothed_score, ScheduleConfig};

/// Strictly increasing, non-empty set of quantile levels inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileGrid {
    levels: Vec<f64>,
}

impl QuantileGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::config("grid", "quantile grid must not be empty"));
        }
        for (i, &t) in levels.iter().enumerate() {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::config("grid", format!("level {t} is outside (0, 1)")));
            }
            if i > 0 && t <= levels[i - 1] {
                return Err(Error::config("grid", "levels must be strictly increasing"));
            }
        }
        Ok(Self { levels })
    }

    /// `{0.1, 0.2, ..., 0.9}`.
    pub fn deciles() -> Self {
        Self {
            levels: (1..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.levels[0]
    }

    pub fn last(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }
}

impl TryFrom<Vec<f64>> for QuantileGrid {
    type Error = Error;

    fn try_from(levels: Vec<f64>) -> Result<Self> {
        Self::new(levels)
    }
}

impl From<QuantileGrid> for Vec<f64> {
    fn from(grid: QuantileGrid) -> Self {
        grid.levels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateMode {
    Raw,
    Averaged,
}

/// Raw and averaged iterates for `series_count` series over a [`QuantileGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileState {
    grid: QuantileGrid,
    schedule: ScheduleConfig,
    initial_values: Vec<f64>,
    step: u64,
    raw: Vec<Vec<f64>>,
    averaged: Vec<Vec<f64>>,
}

impl QuantileState {
    pub fn init(
        series_count: usize,
        grid: QuantileGrid,
        schedule: ScheduleConfig,
        initial_values: Vec<f64>,
    ) -> Result<Self> {
        if series_count == 0 {
            return Err(Error::config("series_count", "need at least one series"));
        }
        if initial_values.len() != series_count {
            return Err(Error::config(
                "initial_values",
                format!("expected {series_count} values, got {}", initial_values.len()),
            ));
        }
        if let Some(v) = initial_values.iter().find(|v| !v.is_finite()) {
            return Err(Error::config("initial_values", format!("non-finite value {v}")));
        }
        if grid.is_empty() {
            return Err(Error::config("grid", "quantile grid must not be empty"));
        }
        schedule.validate()?;
        let raw: Vec<Vec<f64>> = initial_values.iter().map(|&y| vec![y; grid.len()]).collect();
        Ok(Self {
            averaged: raw.clone(),
            raw,
            grid,
            schedule,
            initial_values,
            step: 0,
        })
    }

    /// Single series starting at zero.
    pub fn univariate(grid: QuantileGrid, schedule: ScheduleConfig) -> Result<Self> {
        Self::init(1, grid, schedule, vec![0.0])
    }

    pub fn series_count(&self) -> usize {
        self.raw.len()
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn schedule(&self) -> &ScheduleConfig {
        &self.schedule
    }

    pub fn initial_values(&self) -> &[f64] {
        &self.initial_values
    }

    /// Number of observations consumed so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn raw(&self) -> &[Vec<f64>] {
        &self.raw
    }

    pub fn averaged(&self) -> &[Vec<f64>] {
        &self.averaged
    }

    pub fn estimates(&self, mode: EstimateMode) -> Vec<Vec<f64>> {
        match mode {
            EstimateMode::Raw => self.raw.clone(),
            EstimateMode::Averaged => self.averaged.clone(),
        }
    }

    /// Consumes one synchronized observation vector (one value per series).
    ///
    /// The `k`-th observation uses `gamma_k` and smoothing half-width
    /// `a * gamma_k`. On error the state is left untouched.
    pub fn update(&mut self, observation: &[f64]) -> Result<()> {
        if observation.len() != self.series_count() {
            return Err(Error::input(format!(
                "observation has {} entries, expected {}",
                observation.len(),
                self.series_count()
            )));
        }
        if let Some(v) = observation.iter().find(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite observation {v}")));
        }
        let k = self.step + 1;
        let gamma = self.schedule.gamma_unchecked(k);
        let width = self.schedule.smoothing_width(gamma);
        for ((raw, avg), &x) in self.raw.iter_mut().zip(self.averaged.iter_mut()).zip(observation) {
            for ((y, ybar), &tau) in raw.iter_mut().zip(avg.iter_mut()).zip(self.grid.levels()) {
                *y += gamma * smoothed_score(*y, x, tau, width);
                *ybar = running_mean(*ybar, *y, k);
            }
        }
        self.step = k;
        Ok(())
    }

    /// Folds [`QuantileState::update`] over `observations`; errors carry the
    /// offending position. Observations before the failing one stay applied.
    pub fn merge_stream<I, O>(&mut self, observations: I) -> Result<()>
    where
        I: IntoIterator<Item = O>,
        O: AsRef<[f64]>,
    {
        for (idx, obs) in observations.into_iter().enumerate() {
            self.update(obs.as_ref()).map_err(|e| e.at_index(idx))?;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            version: Snapshot::VERSION,
            schedule: self.schedule,
            grid: self.grid.clone(),
            step: self.step,
            initial_values: self.initial_values.clone(),
            raw: self.raw.clone(),
            averaged: self.averaged.clone(),
        }
    }

    pub fn from_snapshot(snap: Snapshot) -> Result<Self> {
        if snap.version != Snapshot::VERSION {
            return Err(Error::input(format!("unsupported snapshot version {}", snap.version)));
        }
        snap.schedule.validate()?;
        let p = snap.initial_values.len();
        let m = snap.grid.len();
        let shape_ok = |mat: &[Vec<f64>]| mat.len() == p && mat.iter().all(|r| r.len() == m);
        if p == 0 || !shape_ok(&snap.raw) || !shape_ok(&snap.averaged) {
            return Err(Error::input("snapshot matrices do not match series count and grid"));
        }
        Ok(Self {
            grid: snap.grid,
            schedule: snap.schedule,
            initial_values: snap.initial_values,
            step: snap.step,
            raw: snap.raw,
            averaged: snap.averaged,
        })
    }
}

/// `prev * (k-1)/k + y/k`, evaluated so that each floating-point operation is
/// non-decreasing in `prev` and `y`; the ordering of averaged rows is then
/// preserved exactly, not just up to rounding.
#[inline]
pub(crate) fn running_mean(prev: f64, y: f64, k: u64) -> f64 {
    let kf = k as f64;
    (kf - 1.0) * prev / kf + y / kf
}

/// Self-describing checkpoint record of a [`QuantileState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u32,
    pub schedule: ScheduleConfig,
    pub grid: QuantileGrid,
    pub step: u64,
    pub initial_values: Vec<f64>,
    pub raw: Vec<Vec<f64>>,
    pub averaged: Vec<Vec<f64>>,
}

impl Snapshot {
    pub const VERSION: u32 = 1;

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::input(format!("bad snapshot: {e}")))
    }
}
