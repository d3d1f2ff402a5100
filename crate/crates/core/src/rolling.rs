//! Rolling-window refits and out-of-sample quantile forecasts, shared by
//! calibration and backtesting.
//!
//! For an evaluation index `τ` the model is fitted on the `window` raw
//! observations `y[τ-window..τ]` (so `window - max_lag` regression rows)
//! and forecasts `y[τ + horizon - 1]`. One-step fans come straight from the
//! model; longer horizons use the empirical quantiles of simulated paths.

use log::warn;
use rand::Rng;
use rayon::prelude::*;

use crate::data::{build_lag_matrix, lag_vector, pinball_unchecked, QuantileGrid, TimeSeries};
use crate::error::{Error, Result};
use crate::lp::SolverOptions;
use crate::mqr::{estimate, predict_fan, MqrModel, QuantileFan, RegPair};
use crate::rng::{substream, Purpose};
use crate::scenario::{quantiles_from_paths, sample_paths, PathMode, SimConfig};

/// Largest tolerated share of failed windows.
pub const MAX_FAILED_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct RollingSpec {
    pub lags: Vec<usize>,
    pub grid: QuantileGrid,
    pub window: usize,
    pub eval_indices: Vec<usize>,
    pub horizon: usize,
    /// Paths simulated per window when `horizon > 1`.
    pub paths: usize,
    pub seed: u64,
    pub clamp: Option<(f64, f64)>,
    pub mode: PathMode,
}

impl RollingSpec {
    /// The last `n_windows` indices whose `horizon`-step target still lies
    /// inside a series of length `len`.
    pub fn trailing_indices(len: usize, window: usize, n_windows: usize, horizon: usize) -> Result<Vec<usize>> {
        if n_windows == 0 || horizon == 0 {
            return Err(Error::InvalidInput("n_windows and horizon must be at least 1".into()));
        }
        let need = window + n_windows + horizon - 1;
        if len < need {
            return Err(Error::InsufficientData(format!(
                "series of length {len} too short for window {window}, {n_windows} windows and horizon {horizon} (need {need})"
            )));
        }
        let last = len - horizon;
        Ok((last + 1 - n_windows..=last).collect())
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        let max_lag = self.lags.iter().copied().max().unwrap_or(0);
        let min_window = if self.lags.is_empty() { 1 } else { max_lag + 2 };
        if self.window < min_window {
            return Err(Error::InvalidInput(format!("window {} too small for maximum lag {max_lag}", self.window)));
        }
        if self.horizon == 0 || self.paths == 0 {
            return Err(Error::InvalidInput("horizon and path count must be at least 1".into()));
        }
        if self.eval_indices.is_empty() {
            return Err(Error::InvalidInput("no evaluation indices".into()));
        }
        for &tau in &self.eval_indices {
            if tau < self.window || tau + self.horizon > len {
                return Err(Error::InsufficientData(format!(
                    "evaluation index {tau} needs observations {}..{} but the series has {len}",
                    tau as i64 - self.window as i64,
                    tau + self.horizon
                )));
            }
        }
        Ok(())
    }

    pub fn sim_config(&self, tau: usize) -> SimConfig {
        let seed = substream(self.seed, Purpose::Window, tau as u64).random::<u64>();
        SimConfig { steps: self.horizon, paths: self.paths, seed, clamp: self.clamp, mode: self.mode }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowForecast {
    pub tau: usize,
    pub y_true: f64,
    pub fan: QuantileFan,
    /// `y_true ≤ fan_j` per level.
    pub flags: Vec<bool>,
    /// `Σ_j ρ_αj(y_true − fan_j)`.
    pub pinball: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingRun {
    pub forecasts: Vec<WindowForecast>,
    /// `(τ, message)` of windows whose fit failed.
    pub failed: Vec<(usize, String)>,
}

impl RollingRun {
    /// Coverage frequencies `F_j` over the successful windows.
    pub fn fj(&self) -> Vec<f64> {
        let nj = self.forecasts.first().map_or(0, |f| f.flags.len());
        let n = self.forecasts.len() as f64;
        (0..nj).map(|j| self.forecasts.iter().filter(|f| f.flags[j]).count() as f64 / n).collect()
    }
}

/// Fit for the window ending just before `tau`.
pub fn fit_window(series: &TimeSeries, tau: usize, theta: RegPair, spec: &RollingSpec, opts: &SolverOptions) -> Result<MqrModel> {
    let train = series.slice(tau - spec.window, tau)?;
    let data = build_lag_matrix(&train, &spec.lags)?;
    estimate(&data, &spec.grid, theta, opts)
}

/// Forecast fan of `y[tau + horizon - 1]` from a fitted model.
pub fn forecast(model: &MqrModel, series: &TimeSeries, tau: usize, spec: &RollingSpec) -> Result<QuantileFan> {
    if spec.horizon == 1 {
        return predict_fan(model, &lag_vector(series.values(), tau, &spec.lags));
    }
    let history = series.slice(0, tau)?;
    let scen = sample_paths(model, &history, &spec.sim_config(tau))?;
    quantiles_from_paths(&scen, &spec.grid, spec.horizon)
}

pub fn score(fan: QuantileFan, tau: usize, y_true: f64) -> WindowForecast {
    let alphas = fan.grid.alphas();
    let flags = fan.values.iter().map(|q| y_true <= *q).collect();
    let pinball = alphas.iter().zip(&fan.values).map(|(a, q)| pinball_unchecked(*a, y_true - q)).sum();
    WindowForecast { tau, y_true, fan, flags, pinball }
}

/// Refits and forecasts at every evaluation index. Windows whose fit fails
/// are skipped and counted; more than [`MAX_FAILED_SHARE`] failures is an
/// error.
pub fn rolling_forecasts(series: &TimeSeries, theta: RegPair, spec: &RollingSpec, opts: &SolverOptions) -> Result<RollingRun> {
    spec.validate(series.len())?;
    let results: Vec<(usize, Result<WindowForecast>)> = spec
        .eval_indices
        .par_iter()
        .map(|&tau| {
            let r = fit_window(series, tau, theta, spec, opts)
                .and_then(|m| forecast(&m, series, tau, spec))
                .map(|fan| score(fan, tau, series.values()[tau + spec.horizon - 1]));
            (tau, r)
        })
        .collect();
    let mut run = RollingRun { forecasts: Vec::new(), failed: Vec::new() };
    for (tau, r) in results {
        match r {
            Ok(f) => run.forecasts.push(f),
            Err(e) => run.failed.push((tau, e.to_string())),
        }
    }
    let total = spec.eval_indices.len();
    if !run.failed.is_empty() {
        warn!("{} of {total} windows failed for lambda={} gamma={}; first: {}", run.failed.len(), theta.lambda, theta.gamma, run.failed[0].1);
    }
    if run.forecasts.is_empty() || run.failed.len() as f64 > MAX_FAILED_SHARE * total as f64 {
        return Err(Error::WindowFailures { failed: run.failed.len(), total });
    }
    Ok(run)
}
