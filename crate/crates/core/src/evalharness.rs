//! Synthetic AR(1) replication study and rolling-origin backtests.

use std::path::Path;

use log::warn;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::calibrate::{probability_mae, sic, TableRow, DEFAULT_ZERO_TOL};
use crate::data::{build_lag_matrix, pinball_unchecked, DesignMatrix, QuantileGrid, TimeSeries};
use crate::error::{Error, Result};
use crate::lp::SolverOptions;
use crate::mqr::{estimate, MqrModel, RegPair};
use crate::rng::{substream, Purpose};
use crate::rolling::{fit_window, rolling_forecasts, RollingRun, RollingSpec};
use crate::scenario::{empirical_quantile, PathMode};

/// Levels used for the tail-only coverage error.
pub const EXTREME_LEVELS: [f64; 6] = [0.05, 0.10, 0.15, 0.85, 0.90, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub struct Ar1StudyConfig {
    pub beta0: f64,
    pub beta1: f64,
    pub sigma: f64,
    pub n: usize,
    pub replications: usize,
    /// Candidate curvature penalties for the cross-validated fit.
    pub gamma_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
}

impl Default for Ar1StudyConfig {
    fn default() -> Self {
        Self {
            beta0: 0.0,
            beta1: 0.3,
            sigma: 1.0,
            n: 400,
            replications: 200,
            gamma_grid: vec![0.0, 0.5, 2.0, 8.0, 32.0],
            folds: 5,
            seed: 1,
        }
    }
}

impl Ar1StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta0.is_finite() && self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidInput("beta0 must be finite and sigma finite and non-negative".into()));
        }
        if self.beta1.is_nan() || self.beta1.abs() >= 1.0 {
            return Err(Error::InvalidInput(format!("|beta1| = {} must be below 1 for stationarity", self.beta1.abs())));
        }
        if self.n < 50 {
            return Err(Error::InvalidInput(format!("series length {} below the minimum of 50", self.n)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidInput("at least one replication is required".into()));
        }
        if self.gamma_grid.is_empty() || self.gamma_grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(Error::InvalidInput("gamma grid must be non-empty, finite and non-negative".into()));
        }
        if self.folds < 2 || self.folds > self.n / 10 {
            return Err(Error::InvalidInput(format!("fold count {} must lie in 2..={}", self.folds, self.n / 10)));
        }
        Ok(())
    }
}

/// `y_1..y_n` of `y_t = β0 + β1·y_{t-1} + σ·ε_t` started from `y_0 = 0`.
pub fn generate_ar1(cfg: &Ar1StudyConfig, replication: u64) -> Result<TimeSeries> {
    cfg.validate()?;
    let mut rng = substream(cfg.seed, Purpose::Ar1, replication);
    let mut prev = 0.0;
    let values = (0..cfg.n)
        .map(|_| {
            let e: f64 = rng.sample(StandardNormal);
            prev = cfg.beta0 + cfg.beta1 * prev + cfg.sigma * e;
            prev
        })
        .collect();
    TimeSeries::new(values)
}

/// Conditional `α`-quantile of the AR(1) process given `y_{t-1} = x_prev`.
pub fn true_ar1_quantile(alpha: f64, x_prev: f64, beta0: f64, beta1: f64, sigma: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(beta0 + beta1 * x_prev + sigma * Normal::standard().inverse_cdf(alpha))
}

/// Out-of-fold pinball loss of a fit with curvature penalty `gamma`, using
/// contiguous row blocks as folds.
pub fn blocked_cv_loss(data: &DesignMatrix, grid: &QuantileGrid, gamma: f64, folds: usize, opts: &SolverOptions) -> Result<f64> {
    let n = data.n_rows();
    let theta = RegPair::new(0.0, gamma)?;
    let mut total = 0.0;
    for f in 0..folds {
        let (lo, hi) = (f * n / folds, (f + 1) * n / folds);
        let train = data.select_rows(|i| i < lo || i >= hi);
        let test = data.select_rows(|i| i >= lo && i < hi);
        let model = estimate(&train, grid, theta, opts)?;
        for (q, y) in model.fitted(&test)?.iter().zip(test.targets()) {
            total += grid.alphas().iter().zip(q).map(|(a, qj)| pinball_unchecked(*a, y - qj)).sum::<f64>();
        }
    }
    Ok(total)
}

/// Curvature penalty with the smallest blocked-CV loss (first wins ties).
pub fn select_gamma(data: &DesignMatrix, grid: &QuantileGrid, gammas: &[f64], folds: usize, opts: &SolverOptions) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for &g in gammas {
        let loss = blocked_cv_loss(data, grid, g, folds, opts)?;
        if best.is_none_or(|(_, b)| loss < b) {
            best = Some((g, loss));
        }
    }
    Ok(best.expect("gamma grid is non-empty").0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Replication {
    pub replication: usize,
    /// Raw-scale lag-1 slopes per level, unregularized fit.
    pub slopes_b1: Vec<f64>,
    /// Raw-scale lag-1 slopes per level, cross-validated curvature fit.
    pub slopes_lr: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeSummary {
    pub alpha: f64,
    pub model: &'static str,
    pub median: f64,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ar1StudyReport {
    pub grid: QuantileGrid,
    pub replications: Vec<Ar1Replication>,
    pub failed: Vec<(usize, String)>,
}

fn sample_variance(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

impl Ar1StudyReport {
    pub fn slopes(&self, model: &str, j: usize) -> Vec<f64> {
        self.replications.iter().map(|r| if model == "MQR-B1" { r.slopes_b1[j] } else { r.slopes_lr[j] }).collect()
    }

    /// Median, mean and sample variance of the slope per level and model.
    pub fn summary(&self) -> Vec<SlopeSummary> {
        let mut out = Vec::new();
        for (j, &alpha) in self.grid.alphas().iter().enumerate() {
            for model in ["MQR-B1", "MQR-LR"] {
                let mut v = self.slopes(model, j);
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let variance = sample_variance(&v);
                v.sort_by(f64::total_cmp);
                out.push(SlopeSummary { alpha, model, median: empirical_quantile(&v, 0.5), mean, variance });
            }
        }
        out
    }

    pub fn find(&self, alpha: f64, model: &str) -> Option<SlopeSummary> {
        self.summary().into_iter().find(|s| (s.alpha - alpha).abs() < 1e-12 && s.model == model)
    }
}

fn ar1_replication(cfg: &Ar1StudyConfig, grid: &QuantileGrid, r: usize, opts: &SolverOptions) -> Result<Ar1Replication> {
    let series = generate_ar1(cfg, r as u64)?;
    let data = build_lag_matrix(&series, &[1])?;
    let slope = |m: MqrModel| m.raw_coefficients().1.remove(0);
    let slopes_b1 = slope(estimate(&data, grid, RegPair::unregularized(), opts)?);
    let gamma = select_gamma(&data, grid, &cfg.gamma_grid, cfg.folds, opts)?;
    let slopes_lr = slope(estimate(&data, grid, RegPair::new(0.0, gamma)?, opts)?);
    Ok(Ar1Replication { replication: r, slopes_b1, slopes_lr, gamma })
}

/// Fits the unregularized and the cross-validated curvature-penalized
/// models with one lag on every replication. Failed replications are
/// reported; the study fails only if none succeeds.
pub fn run_ar1_study(cfg: &Ar1StudyConfig, grid: &QuantileGrid, opts: &SolverOptions) -> Result<Ar1StudyReport> {
    cfg.validate()?;
    let results: Vec<(usize, Result<Ar1Replication>)> =
        (0..cfg.replications).into_par_iter().map(|r| (r, ar1_replication(cfg, grid, r, opts))).collect();
    let mut report = Ar1StudyReport { grid: grid.clone(), replications: Vec::new(), failed: Vec::new() };
    for (r, res) in results {
        match res {
            Ok(rep) => report.replications.push(rep),
            Err(e) => {
                warn!("replication {r} failed: {e}");
                report.failed.push((r, e.to_string()));
            }
        }
    }
    if report.replications.is_empty() {
        return Err(Error::AllCellsFailed(report.failed[0].1.clone()));
    }
    Ok(report)
}

/// `alpha,model,replication,estimate`.
pub fn write_slopes_csv(path: &Path, report: &Ar1StudyReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "model", "replication", "estimate"])?;
    for (j, a) in report.grid.alphas().iter().enumerate() {
        for model in ["MQR-B1", "MQR-LR"] {
            for rep in &report.replications {
                let v = if model == "MQR-B1" { rep.slopes_b1[j] } else { rep.slopes_lr[j] };
                w.write_record([a.to_string(), model.to_string(), rep.replication.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `alpha,model,median,mean,variance`.
pub fn write_slope_summary_csv(path: &Path, report: &Ar1StudyReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "model", "median", "mean", "variance"])?;
    for s in report.summary() {
        w.write_record([s.alpha.to_string(), s.model.into(), s.median.to_string(), s.mean.to_string(), s.variance.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    pub window: usize,
    pub n_windows: usize,
    pub horizon: usize,
    pub lags: Vec<usize>,
    pub grid: QuantileGrid,
    pub theta: RegPair,
    pub seed: u64,
    /// Simulated paths per window for multi-step horizons.
    pub paths: usize,
    pub clamp: Option<(f64, f64)>,
    pub mode: PathMode,
}

impl BacktestConfig {
    pub fn new(window: usize, n_windows: usize, horizon: usize, lags: Vec<usize>, theta: RegPair) -> Self {
        Self {
            window,
            n_windows,
            horizon,
            lags,
            grid: QuantileGrid::default_grid(),
            theta,
            seed: 1,
            paths: 1000,
            clamp: None,
            mode: PathMode::PerPath,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let max_lag = self.lags.iter().copied().max().unwrap_or(0);
        if self.window <= max_lag {
            return Err(Error::InvalidInput(format!("window {} must exceed the maximum lag {max_lag}", self.window)));
        }
        if self.n_windows == 0 || self.horizon == 0 || self.paths == 0 {
            return Err(Error::InvalidInput("n_windows, horizon and paths must be at least 1".into()));
        }
        Ok(())
    }

    /// Rolling scheme over the last `n_windows` targets of a series.
    pub fn spec(&self, series_len: usize) -> Result<RollingSpec> {
        self.validate()?;
        Ok(RollingSpec {
            lags: self.lags.clone(),
            grid: self.grid.clone(),
            window: self.window,
            eval_indices: RollingSpec::trailing_indices(series_len, self.window, self.n_windows, self.horizon)?,
            horizon: self.horizon,
            paths: self.paths,
            seed: self.seed,
            clamp: self.clamp,
            mode: self.mode,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub theta: RegPair,
    pub horizon: usize,
    pub run: RollingRun,
    pub fj: Vec<f64>,
    pub mae: f64,
    /// Coverage error restricted to the levels of [`EXTREME_LEVELS`] present
    /// in the grid; `None` if there are none.
    pub extreme_mae: Option<f64>,
    pub mean_pinball: f64,
    /// SIC of the fit on the first training window.
    pub sic: f64,
}

impl BacktestReport {
    pub fn prob_prob(&self) -> Vec<(f64, f64)> {
        self.run.forecasts[0].fan.grid.alphas().iter().copied().zip(self.fj.iter().copied()).collect()
    }

    pub fn table_row(&self) -> TableRow {
        TableRow { model: self.theta.label().to_string(), horizon: self.horizon, theta: self.theta, sic: Some(self.sic), mae: Some(self.mae) }
    }
}

/// Mean `|α_j − F_j|` over the levels of `alphas` that belong to `subset`.
pub fn subset_mae(alphas: &[f64], fj: &[f64], subset: &[f64]) -> Option<f64> {
    let picked: Vec<f64> = alphas
        .iter()
        .zip(fj)
        .filter(|(a, _)| subset.iter().any(|s| (*s - **a).abs() < 1e-9))
        .map(|(a, f)| (a - f).abs())
        .collect();
    (!picked.is_empty()).then(|| picked.iter().sum::<f64>() / picked.len() as f64)
}

pub fn run_backtest(series: &TimeSeries, cfg: &BacktestConfig, opts: &SolverOptions) -> Result<BacktestReport> {
    let spec = cfg.spec(series.len())?;
    let run = rolling_forecasts(series, cfg.theta, &spec, opts)?;
    let fj = run.fj();
    let mae = probability_mae(&fj, &cfg.grid)?;
    let extreme_mae = subset_mae(cfg.grid.alphas(), &fj, &EXTREME_LEVELS);
    let mean_pinball = run.forecasts.iter().map(|f| f.pinball).sum::<f64>() / run.forecasts.len() as f64;

    let tau = spec.eval_indices[0];
    let model = fit_window(series, tau, cfg.theta, &spec, opts)?;
    let train = build_lag_matrix(&series.slice(tau - spec.window, tau)?, &spec.lags)?;
    let sic = sic(&model, &train, DEFAULT_ZERO_TOL)?;

    Ok(BacktestReport { theta: cfg.theta, horizon: cfg.horizon, run, fj, mae, extreme_mae, mean_pinball, sic })
}

/// `window,tau,step,y_true,pinball,q_<α>…,flag_<α>…`, one row per window.
pub fn write_backtest_csv(path: &Path, report: &BacktestReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let Some(first) = report.run.forecasts.first() else {
        return Err(Error::InvalidInput("backtest has no forecasts".into()));
    };
    let alphas = first.fan.grid.alphas();
    let mut header: Vec<String> = ["window", "tau", "step", "y_true", "pinball"].iter().map(|s| s.to_string()).collect();
    header.extend(alphas.iter().map(|a| format!("q_{a}")));
    header.extend(alphas.iter().map(|a| format!("flag_{a}")));
    w.write_record(&header)?;
    for (i, f) in report.run.forecasts.iter().enumerate() {
        let mut rec = vec![i.to_string(), f.tau.to_string(), report.horizon.to_string(), f.y_true.to_string(), f.pinball.to_string()];
        rec.extend(f.fan.values.iter().map(|v| v.to_string()));
        rec.extend(f.flags.iter().map(|&b| u8::from(b).to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `alpha,empirical_f`.
pub fn write_prob_prob_csv(path: &Path, report: &BacktestReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "empirical_f"])?;
    for (a, f) in report.prob_prob() {
        w.write_record([a.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
