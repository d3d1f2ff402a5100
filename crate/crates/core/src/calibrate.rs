//! Model scoring (SIC and probability MAE) and grid search over `(λ, γ)`.

use std::path::Path;

use log::warn;
use rayon::prelude::*;

use crate::data::{build_lag_matrix, pinball_unchecked, DesignMatrix, QuantileGrid, TimeSeries};
use crate::error::{Error, Result};
use crate::lp::SolverOptions;
use crate::mqr::{MqrModel, RegPair};
use crate::rolling::{fit_window, rolling_forecasts, RollingSpec};

/// Residuals at most this large (in absolute value) count as interpolated.
pub const DEFAULT_ZERO_TOL: f64 = 1e-6;

/// Score information criterion from a residual table `residuals[t][j]`.
///
/// Per level: `log(Σ_t ρ_αj(r_tj)) + log(T)·E_j / (2T)` with `E_j` the
/// number of rows with `|r_tj| ≤ zero_tol`. Returns `-∞` (and logs a
/// warning) when some level interpolates every row.
pub fn sic_from_residuals(residuals: &[Vec<f64>], alphas: &[f64], zero_tol: f64) -> f64 {
    let t = residuals.len() as f64;
    let mut total = 0.0;
    for (j, &a) in alphas.iter().enumerate() {
        let loss: f64 = residuals.iter().map(|r| pinball_unchecked(a, r[j])).sum();
        if loss <= 0.0 {
            warn!("SIC undefined: zero in-sample pinball loss at alpha={a}");
            return f64::NEG_INFINITY;
        }
        let elbow = residuals.iter().filter(|r| r[j].abs() <= zero_tol).count() as f64;
        total += loss.ln() + t.ln() * elbow / (2.0 * t);
    }
    total
}

/// SIC of a fitted model on its raw training design.
pub fn sic(model: &MqrModel, data: &DesignMatrix, zero_tol: f64) -> Result<f64> {
    if data.n_rows() == 0 {
        return Err(Error::InsufficientData("SIC needs at least one row".into()));
    }
    let fitted = model.fitted(data)?;
    let residuals: Vec<Vec<f64>> =
        fitted.iter().zip(data.targets()).map(|(q, y)| q.iter().map(|qj| y - qj).collect()).collect();
    Ok(sic_from_residuals(&residuals, model.grid.alphas(), zero_tol))
}

/// `(1/|J|) Σ_j |α_j − F_j|`.
pub fn probability_mae(fj: &[f64], grid: &QuantileGrid) -> Result<f64> {
    if fj.len() != grid.len() {
        return Err(Error::DimensionMismatch { expected: grid.len(), got: fj.len() });
    }
    if let Some(f) = fj.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::Domain(format!("frequency {f} outside [0, 1]")));
    }
    Ok(grid.alphas().iter().zip(fj).map(|(a, f)| (a - f).abs()).sum::<f64>() / fj.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageEstimate {
    pub fj: Vec<f64>,
    pub windows_used: usize,
    pub windows_failed: usize,
}

/// Out-of-sample coverage frequencies `F_j` over the rolling windows.
pub fn empirical_fj(theta: RegPair, series: &TimeSeries, spec: &RollingSpec, opts: &SolverOptions) -> Result<CoverageEstimate> {
    let run = rolling_forecasts(series, theta, spec, opts)?;
    Ok(CoverageEstimate { fj: run.fj(), windows_used: run.forecasts.len(), windows_failed: run.failed.len() })
}

/// Candidate `λ` and `γ` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaGrid {
    lambdas: Vec<f64>,
    gammas: Vec<f64>,
}

impl ThetaGrid {
    pub fn new(lambdas: Vec<f64>, gammas: Vec<f64>) -> Result<Self> {
        for (name, v) in [("lambda", &lambdas), ("gamma", &gammas)] {
            if v.is_empty() {
                return Err(Error::InvalidInput(format!("{name} grid is empty")));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::InvalidInput(format!("{name} grid values must be finite and non-negative")));
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput(format!("{name} grid must be strictly increasing")));
            }
        }
        Ok(Self { lambdas, gammas })
    }

    /// `λ ∈ {0, 0.13, 1, 2.5, 3.25, 6.75, 20}`, `γ ∈ {0, 1, 7}`.
    pub fn default_grid() -> Self {
        Self { lambdas: vec![0.0, 0.13, 1.0, 2.5, 3.25, 6.75, 20.0], gammas: vec![0.0, 1.0, 7.0] }
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// Cells ordered by `λ`, then `γ`.
    pub fn cells(&self) -> Vec<RegPair> {
        self.lambdas.iter().flat_map(|&l| self.gammas.iter().map(move |&g| RegPair { lambda: l, gamma: g })).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Sic,
    Mae,
    Both,
}

impl Metric {
    fn sic(self) -> bool {
        matches!(self, Metric::Sic | Metric::Both)
    }

    fn mae(self) -> bool {
        matches!(self, Metric::Mae | Metric::Both)
    }
}

/// Data and rolling scheme for scoring a cell. SIC uses the fit on the
/// training window that precedes the first evaluation index.
#[derive(Debug, Clone)]
pub struct CalibrationContext<'a> {
    pub series: &'a TimeSeries,
    pub spec: RollingSpec,
    pub opts: SolverOptions,
    pub zero_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellScore {
    pub theta: RegPair,
    pub sic: Option<f64>,
    pub mae: Option<f64>,
    pub fj: Option<Vec<f64>>,
    pub windows_failed: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub rows: Vec<CellScore>,
    pub best_by_sic: Option<RegPair>,
    pub best_by_mae: Option<RegPair>,
    pub horizon: usize,
}

impl CalibrationReport {
    pub fn cell(&self, theta: RegPair) -> Option<&CellScore> {
        self.rows.iter().find(|r| r.theta == theta)
    }

    /// One table row per selected model: `<label>(SIC)` and `<label>(MAE)`.
    pub fn table_rows(&self) -> Vec<TableRow> {
        let mut out = Vec::new();
        for (best, tag) in [(self.best_by_sic, "SIC"), (self.best_by_mae, "MAE")] {
            if let Some(cell) = best.and_then(|t| self.cell(t)) {
                out.push(TableRow {
                    model: format!("{}({tag})", cell.theta.label()),
                    horizon: self.horizon,
                    theta: cell.theta,
                    sic: cell.sic,
                    mae: cell.mae,
                });
            }
        }
        out
    }
}

/// Smallest finite-or-`-∞` score; earlier cells win ties, so with the
/// `(λ, γ)` cell order the smaller `λ`, then smaller `γ`, is preferred.
fn argmin(rows: &[CellScore], score: impl Fn(&CellScore) -> Option<f64>) -> Option<RegPair> {
    let mut best: Option<(RegPair, f64)> = None;
    for r in rows {
        if let Some(v) = score(r).filter(|v| !v.is_nan()) {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((r.theta, v));
            }
        }
    }
    best.map(|(t, _)| t)
}

fn score_cell(theta: RegPair, metric: Metric, ctx: &CalibrationContext<'_>) -> CellScore {
    let mut cell = CellScore { theta, sic: None, mae: None, fj: None, windows_failed: 0, error: None };
    let result = (|| -> Result<()> {
        if metric.sic() {
            let tau = ctx.spec.eval_indices[0];
            let model = fit_window(ctx.series, tau, theta, &ctx.spec, &ctx.opts)?;
            let data = build_lag_matrix(&ctx.series.slice(tau - ctx.spec.window, tau)?, &ctx.spec.lags)?;
            cell.sic = Some(sic(&model, &data, ctx.zero_tol)?);
        }
        if metric.mae() {
            let cov = empirical_fj(theta, ctx.series, &ctx.spec, &ctx.opts)?;
            cell.mae = Some(probability_mae(&cov.fj, &ctx.spec.grid)?);
            cell.windows_failed = cov.windows_failed;
            cell.fj = Some(cov.fj);
        }
        Ok(())
    })();
    if let Err(e) = result {
        warn!("cell lambda={} gamma={} failed: {e}", theta.lambda, theta.gamma);
        cell.sic = None;
        cell.mae = None;
        cell.error = Some(e.to_string());
    }
    cell
}

/// Scores every cell of the grid. Failed cells are kept in the table with
/// their error; the search fails only if every cell fails.
pub fn grid_search(grid: &ThetaGrid, metric: Metric, ctx: &CalibrationContext<'_>) -> Result<CalibrationReport> {
    ctx.spec.validate(ctx.series.len())?;
    let rows: Vec<CellScore> = grid.cells().into_par_iter().map(|theta| score_cell(theta, metric, ctx)).collect();
    if let Some(first) = rows.iter().find_map(|r| r.error.clone()).filter(|_| rows.iter().all(|r| r.error.is_some())) {
        return Err(Error::AllCellsFailed(first));
    }
    Ok(CalibrationReport {
        best_by_sic: argmin(&rows, |r| r.sic),
        best_by_mae: argmin(&rows, |r| r.mae),
        rows,
        horizon: ctx.spec.horizon,
    })
}

/// `lambda,gamma,metric,value`, one line per computed score; MAE in percent.
pub fn write_heatmap_csv(path: &Path, report: &CalibrationReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["lambda", "gamma", "metric", "value"])?;
    for r in &report.rows {
        let (l, g) = (r.theta.lambda.to_string(), r.theta.gamma.to_string());
        if let Some(s) = r.sic {
            w.write_record([l.as_str(), g.as_str(), "sic", &s.to_string()])?;
        }
        if let Some(m) = r.mae {
            w.write_record([l.as_str(), g.as_str(), "mae", &(100.0 * m).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Summary line in the `model,horizon,lambda,gamma,sic,mae_percent` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub model: String,
    pub horizon: usize,
    pub theta: RegPair,
    pub sic: Option<f64>,
    pub mae: Option<f64>,
}

pub fn write_table_csv(path: &Path, rows: &[TableRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "horizon", "lambda", "gamma", "sic", "mae_percent"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.horizon.to_string(),
            r.theta.lambda.to_string(),
            r.theta.gamma.to_string(),
            opt(r.sic),
            opt(r.mae.map(|m| 100.0 * m)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sic_fixtures() {
        let r = |v: &[f64]| v.iter().map(|&x| vec![x]).collect::<Vec<_>>();
        let s = sic_from_residuals(&r(&[1.0, -1.0, 2.0]), &[0.5], 1e-6);
        assert!((s - 2f64.ln()).abs() < 1e-12);
        let s = sic_from_residuals(&r(&[1.0, -1.0, 0.0]), &[0.5], 1e-6);
        assert!((s - (1f64.ln() + 3f64.ln() / 6.0)).abs() < 1e-12);
        assert_eq!(sic_from_residuals(&r(&[0.0, 0.0]), &[0.5], 1e-6), f64::NEG_INFINITY);
    }

    #[test]
    fn mae_examples() {
        let g = QuantileGrid::with_min_len(vec![0.25, 0.75], 2).unwrap();
        assert!((probability_mae(&[0.35, 0.65], &g).unwrap() - 0.10).abs() < 1e-12);
        let d = QuantileGrid::default_grid();
        assert!((probability_mae(&[0.0; 19], &d).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(probability_mae(d.alphas(), &d).unwrap(), 0.0);
        assert!(probability_mae(&[0.1], &d).is_err());
    }

    #[test]
    fn theta_grid_validation() {
        assert!(ThetaGrid::new(vec![], vec![0.0]).is_err());
        assert!(ThetaGrid::new(vec![1.0, 1.0], vec![0.0]).is_err());
        assert!(ThetaGrid::new(vec![-1.0], vec![0.0]).is_err());
        let g = ThetaGrid::new(vec![0.0, 2.0], vec![0.0, 1.0, 5.0]).unwrap();
        assert_eq!(g.cells().len(), 6);
        assert_eq!(g.cells()[1], RegPair { lambda: 0.0, gamma: 1.0 });
    }

    #[test]
    fn ties_prefer_smaller_lambda_then_gamma() {
        let cell = |l, g, v| CellScore {
            theta: RegPair { lambda: l, gamma: g },
            sic: Some(v),
            mae: None,
            fj: None,
            windows_failed: 0,
            error: None,
        };
        let rows = vec![cell(0.0, 0.0, 2.0), cell(0.0, 1.0, 1.0), cell(1.0, 0.0, 1.0), cell(1.0, 1.0, 1.5)];
        assert_eq!(argmin(&rows, |r| r.sic), Some(RegPair { lambda: 0.0, gamma: 1.0 }));
        assert_eq!(argmin(&rows, |r| r.mae), None);
    }

    proptest! {
        #[test]
        fn mae_is_permutation_invariant_and_bounded(
            pairs in proptest::collection::vec(0.0f64..=1.0, 3..15), shift in 0usize..15,
        ) {
            let n = pairs.len();
            let alphas: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
            let g = QuantileGrid::new(alphas.clone()).unwrap();
            let mae = probability_mae(&pairs, &g).unwrap();
            prop_assert!(mae <= alphas[n - 1].max(1.0 - alphas[0]) + 1e-12);
            // Rotating both lists keeps every (alpha, F) pair intact.
            let k = shift % n;
            let mut a2 = alphas.clone();
            let mut f2 = pairs.clone();
            a2.rotate_left(k);
            f2.rotate_left(k);
            let direct: f64 = a2.iter().zip(&f2).map(|(a, f)| (a - f).abs()).sum::<f64>() / n as f64;
            prop_assert!((direct - mae).abs() < 1e-12);
        }

        #[test]
        fn extra_elbow_member_adds_fixed_charge(
            base in proptest::collection::vec(0.5f64..5.0, 3..20), extra in 0.1f64..3.0,
        ) {
            // Swap a nonzero residual for a zero one while keeping the loss sum fixed.
            let n = base.len() as f64;
            let mut with_zero: Vec<Vec<f64>> = base.iter().map(|&r| vec![r]).collect();
            let mut without: Vec<Vec<f64>> = with_zero.clone();
            with_zero.push(vec![0.0]);
            with_zero[0][0] += extra;
            without.push(vec![extra]);
            let n = n + 1.0;
            let diff = sic_from_residuals(&with_zero, &[0.5], 1e-6) - sic_from_residuals(&without, &[0.5], 1e-6);
            prop_assert!((diff - n.ln() / (2.0 * n)).abs() < 1e-9);
        }
    }
}
