//! Continuous quantile functions and recursive Monte Carlo paths.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::data::{QuantileGrid, TimeSeries};
use crate::error::{Error, Result};
use crate::mqr::{predict_fan, MqrModel, QuantileFan};
use crate::rng::{substream, Purpose};

/// Piecewise-linear quantile function on `[0, 1]`.
///
/// The knots are the fan values plus two end points obtained by extending
/// the first and last segments to probabilities 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousQF {
    probs: Vec<f64>,
    values: Vec<f64>,
    rearranged: bool,
}

impl ContinuousQF {
    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.probs.iter().copied().zip(self.values.iter().copied())
    }

    /// True when the source fan crossed and had to be sorted.
    pub fn rearranged(&self) -> bool {
        self.rearranged
    }

    pub fn eval(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.probs.partition_point(|&p| p <= u).clamp(1, self.probs.len() - 1);
        let (p0, p1) = (self.probs[k - 1], self.probs[k]);
        let (v0, v1) = (self.values[k - 1], self.values[k]);
        v0 + (v1 - v0) * (u - p0) / (p1 - p0)
    }
}

pub fn build_qf(fan: &QuantileFan) -> Result<ContinuousQF> {
    let a = fan.grid.alphas();
    let n = a.len();
    if n < 2 || fan.values.len() != n {
        return Err(Error::InvalidInput("a quantile function needs at least 2 fan points".into()));
    }
    let mut q = fan.values.clone();
    let mut rearranged = fan.rearranged;
    if q.windows(2).any(|w| w[1] < w[0]) {
        q.sort_by(f64::total_cmp);
        rearranged = true;
    }
    let left = q[0] - (q[1] - q[0]) / (a[1] - a[0]) * a[0];
    let right = q[n - 1] + (q[n - 1] - q[n - 2]) / (a[n - 1] - a[n - 2]) * (1.0 - a[n - 1]);
    let mut probs = Vec::with_capacity(n + 2);
    let mut values = Vec::with_capacity(n + 2);
    probs.push(0.0);
    values.push(left);
    probs.extend_from_slice(a);
    values.extend_from_slice(&q);
    probs.push(1.0);
    values.push(right);
    Ok(ContinuousQF { probs, values, rearranged })
}

/// How steps after the first are conditioned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PathMode {
    /// Each path inverts the quantile function built from its own lags.
    #[default]
    PerPath,
    /// All paths share one quantile function per step: the level-wise
    /// average of the per-path fans.
    Pooled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub clamp: Option<(f64, f64)>,
    pub mode: PathMode,
}

impl SimConfig {
    pub fn new(steps: usize, paths: usize, seed: u64) -> Self {
        Self { steps, paths, seed, clamp: None, mode: PathMode::PerPath }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.paths == 0 {
            return Err(Error::InvalidInput("scenario steps and path count must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.clamp {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidInput(format!("invalid clamp range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// `paths[s][k]`: value of scenario `s` at step `k + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub paths: Vec<Vec<f64>>,
    pub seed: u64,
    pub model_id: String,
    /// Number of crossed fans that were sorted before inversion.
    pub rearrangements: usize,
}

impl ScenarioSet {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn n_steps(&self) -> usize {
        self.paths.first().map_or(0, Vec::len)
    }

    pub fn column(&self, step: usize) -> Result<Vec<f64>> {
        if step == 0 || step > self.n_steps() {
            return Err(Error::InvalidInput(format!("step {step} outside 1..={}", self.n_steps())));
        }
        Ok(self.paths.iter().map(|p| p[step - 1]).collect())
    }
}

/// Lags of a model whose covariates are all `lag_<l>` columns.
pub fn model_lags(model: &MqrModel) -> Result<Vec<usize>> {
    model
        .covariate_labels
        .iter()
        .map(|l| {
            l.strip_prefix("lag_")
                .and_then(|v| v.parse::<usize>().ok())
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::InvalidInput(format!("covariate `{l}` is not a lag; cannot simulate recursively")))
        })
        .collect()
}

pub fn model_id(model: &MqrModel) -> String {
    format!("{}(lambda={},gamma={})", model.label(), model.theta.lambda, model.theta.gamma)
}

/// Simulates `cfg.paths` recursive paths of `cfg.steps` steps continuing
/// `history`. Path `s` draws its uniforms from its own seeded stream.
pub fn sample_paths(model: &MqrModel, history: &TimeSeries, cfg: &SimConfig) -> Result<ScenarioSet> {
    cfg.validate()?;
    let uniforms: Vec<Vec<f64>> = (0..cfg.paths)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(cfg.seed, Purpose::ScenarioPath, s as u64);
            (0..cfg.steps).map(|_| rng.random::<f64>()).collect()
        })
        .collect();
    sample_paths_with(model, history, cfg, |s, k| uniforms[s][k])
}

/// [`sample_paths`] with the uniform draw for path `s`, step index `k`
/// supplied by the caller.
pub fn sample_paths_with(
    model: &MqrModel,
    history: &TimeSeries,
    cfg: &SimConfig,
    uniform: impl Fn(usize, usize) -> f64 + Sync,
) -> Result<ScenarioSet> {
    cfg.validate()?;
    let lags = model_lags(model)?;
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    let h = history.values();
    if h.len() < max_lag {
        return Err(Error::InsufficientData(format!("history of length {} shorter than maximum lag {max_lag}", h.len())));
    }
    let clamp = |v: f64| cfg.clamp.map_or(v, |(lo, hi)| v.clamp(lo, hi));
    let tail = &h[h.len() - max_lag..];

    // Lag vector for the next step of a path whose simulated values so far are `sim`.
    let covariates = |sim: &[f64]| -> Vec<f64> {
        lags.iter()
            .map(|&l| if l <= sim.len() { sim[sim.len() - l] } else { tail[tail.len() - (l - sim.len())] })
            .collect()
    };

    let mut paths: Vec<Vec<f64>> = vec![Vec::with_capacity(cfg.steps); cfg.paths];
    let mut rearrangements = 0;

    let first = build_qf(&predict_fan(model, &covariates(&[]))?)?;
    rearrangements += usize::from(first.rearranged());
    for (s, p) in paths.iter_mut().enumerate() {
        p.push(clamp(first.eval(uniform(s, 0))));
    }

    for k in 1..cfg.steps {
        let fans: Vec<QuantileFan> =
            paths.par_iter().map(|p| predict_fan(model, &covariates(p))).collect::<Result<_>>()?;
        match cfg.mode {
            PathMode::PerPath => {
                let qfs: Vec<ContinuousQF> = fans.iter().map(build_qf).collect::<Result<_>>()?;
                rearrangements += qfs.iter().filter(|q| q.rearranged()).count();
                for (s, (p, qf)) in paths.iter_mut().zip(&qfs).enumerate() {
                    p.push(clamp(qf.eval(uniform(s, k))));
                }
            }
            PathMode::Pooled => {
                let nj = model.grid.len();
                let mut mean = vec![0.0; nj];
                for f in &fans {
                    for (m, v) in mean.iter_mut().zip(&f.values) {
                        *m += v / fans.len() as f64;
                    }
                }
                let qf = build_qf(&QuantileFan::new(model.grid.clone(), mean)?)?;
                rearrangements += usize::from(qf.rearranged());
                for (s, p) in paths.iter_mut().enumerate() {
                    p.push(clamp(qf.eval(uniform(s, k))));
                }
            }
        }
    }
    if paths.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("simulation produced a non-finite value".into()));
    }
    Ok(ScenarioSet { paths, seed: cfg.seed, model_id: model_id(model), rearrangements })
}

/// Linear interpolation between order statistics: position `(n-1)·α`.
pub fn empirical_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * alpha;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Empirical quantiles of the simulated values at `step` (1-based).
pub fn quantiles_from_paths(scen: &ScenarioSet, grid: &QuantileGrid, step: usize) -> Result<QuantileFan> {
    let mut col = scen.column(step)?;
    col.sort_by(f64::total_cmp);
    let values = grid.alphas().iter().map(|&a| empirical_quantile(&col, a)).collect();
    QuantileFan::new(grid.clone(), values)
}

/// `scenario_id,step,value` rows.
pub fn write_scenarios_csv(path: &Path, scen: &ScenarioSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["scenario_id", "step", "value"])?;
    for (s, p) in scen.paths.iter().enumerate() {
        for (k, v) in p.iter().enumerate() {
            w.write_record([s.to_string(), (k + 1).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `alpha,value,step` rows, one fan per step.
pub fn write_fans_csv(path: &Path, fans: &[QuantileFan]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "value", "step"])?;
    for (k, fan) in fans.iter().enumerate() {
        for (a, v) in fan.grid.alphas().iter().zip(&fan.values) {
            w.write_record([a.to_string(), v.to_string(), (k + 1).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
