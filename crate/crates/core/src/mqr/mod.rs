//! Joint non-crossing multi-quantile regression with an adaptive-lasso
//! penalty and an L1 penalty on the second difference of every covariate's
//! coefficient path across quantile levels.
//!
//! All quantile levels are fitted in a single linear program:
//!
//! ```text
//! min  Σ_j Σ_t ρ_{α_j}(y_t − β0_j − β_jᵀx_t)
//!    + λ Σ_j Σ_p w_pj |β_pj|
//!    + γ Σ_p Σ_{j interior} |D²β_pj|
//! s.t. β0_j + β_jᵀx_t ≤ β0_{j+1} + β_{j+1}ᵀx_t   for every training row t
//! ```
//!
//! [`build_lp`] writes this problem out literally (residual, shrinkage and
//! curvature splits as non-negative variable pairs). [`estimate`] instead
//! solves its LP dual, whose equality block has only `|J|·(|P|+1)` rows; the
//! coefficients are read back from the dual's row multipliers. Both routes
//! are cross-checked in the tests.

mod io;

pub use io::{read_model, write_coefficients_csv, write_model};

use crate::data::{apply_norm, normalize, pinball_unchecked, DesignMatrix, NormStats, QuantileGrid};
use crate::error::{Error, Result, Stage};
use crate::lp::{self, LpStatus, SolverOptions, StandardLp};

/// Smallest pilot magnitude used when forming adaptive weights; caps each
/// weight at 10⁴.
pub const WEIGHT_FLOOR: f64 = 1e-4;

/// Regularization pair: adaptive-lasso strength `lambda` and interquantile
/// curvature strength `gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegPair {
    pub lambda: f64,
    pub gamma: f64,
}

impl RegPair {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(lambda) || !ok(gamma) {
            return Err(Error::InvalidInput(format!(
                "regularization pair must be finite and non-negative, got ({lambda}, {gamma})"
            )));
        }
        Ok(Self { lambda, gamma })
    }

    pub const fn unregularized() -> Self {
        Self { lambda: 0.0, gamma: 0.0 }
    }

    /// Ablation name: `MQR-B1` without penalties, `MQR-B2` with the
    /// adaptive lasso only, `MQR-LR` whenever the curvature penalty is on.
    pub fn label(&self) -> &'static str {
        if self.gamma > 0.0 {
            "MQR-LR"
        } else if self.lambda > 0.0 {
            "MQR-B2"
        } else {
            "MQR-B1"
        }
    }
}

/// A fitted model. Coefficients live on the standardized covariate scale;
/// `norm_stats` maps raw covariates onto it.
#[derive(Debug, Clone, PartialEq)]
pub struct MqrModel {
    pub grid: QuantileGrid,
    pub intercepts: Vec<f64>,
    /// `coefs[p][j]`: covariate `p` at level `α_j`.
    pub coefs: Vec<Vec<f64>>,
    pub norm_stats: NormStats,
    pub theta: RegPair,
    pub covariate_labels: Vec<String>,
    /// Adaptive-lasso weights `w[p][j]` of the final solve (ones when λ = 0).
    pub weights: Vec<Vec<f64>>,
    /// Optimal value of the penalized objective.
    pub objective: f64,
}

/// Predicted quantiles on a grid for one covariate row.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFan {
    pub grid: QuantileGrid,
    pub values: Vec<f64>,
    /// Set when the raw prediction crossed and was sorted.
    pub rearranged: bool,
}

impl QuantileFan {
    /// Sorts `values` if they cross.
    pub fn new(grid: QuantileGrid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        let rearranged = values.windows(2).any(|w| w[1] < w[0]);
        if rearranged {
            values.sort_by(f64::total_cmp);
        }
        Ok(Self { grid, values, rearranged })
    }
}

impl MqrModel {
    pub fn n_covariates(&self) -> usize {
        self.covariate_labels.len()
    }

    pub fn label(&self) -> &'static str {
        self.theta.label()
    }

    /// `β0_j + β_jᵀx` for an already standardized row, without rearrangement.
    pub fn quantiles_standardized(&self, x: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|j| self.intercepts[j] + self.coefs.iter().zip(x).map(|(c, v)| c[j] * v).sum::<f64>())
            .collect()
    }

    /// Fitted quantiles (unsorted) at every row of a raw design matrix.
    pub fn fitted(&self, data: &DesignMatrix) -> Result<Vec<Vec<f64>>> {
        data.rows()
            .iter()
            .map(|r| apply_norm(r, &self.norm_stats).map(|x| self.quantiles_standardized(&x)))
            .collect()
    }

    /// Intercepts and slopes expressed on the raw covariate scale.
    pub fn raw_coefficients(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let stats = &self.norm_stats;
        let coefs: Vec<Vec<f64>> =
            self.coefs.iter().zip(&stats.sds).map(|(row, sd)| row.iter().map(|b| b / sd).collect()).collect();
        let intercepts = (0..self.grid.len())
            .map(|j| self.intercepts[j] - coefs.iter().zip(&stats.means).map(|(c, m)| c[j] * m).sum::<f64>())
            .collect();
        (intercepts, coefs)
    }

    /// Penalized objective of this model's coefficients on standardized data.
    pub fn penalized_objective(&self, standardized: &DesignMatrix) -> f64 {
        let alphas = self.grid.alphas();
        let mut total = 0.0;
        for (x, y) in standardized.rows().iter().zip(standardized.targets()) {
            let q = self.quantiles_standardized(x);
            total += alphas.iter().zip(&q).map(|(a, qj)| pinball_unchecked(*a, y - qj)).sum::<f64>();
        }
        for (c, w) in self.coefs.iter().zip(&self.weights) {
            total += self.theta.lambda * c.iter().zip(w).map(|(b, w)| w * b.abs()).sum::<f64>();
            for j in 1..alphas.len() - 1 {
                let d2 = second_derivative(c[j - 1], c[j], c[j + 1], alphas[j - 1], alphas[j], alphas[j + 1])
                    .expect("grid is strictly increasing");
                total += self.theta.gamma * d2.abs();
            }
        }
        total
    }
}

/// Discrete second derivative of a coefficient path at an interior level
/// with arbitrary spacing.
pub fn second_derivative(
    beta_prev: f64,
    beta_cur: f64,
    beta_next: f64,
    a_prev: f64,
    a_cur: f64,
    a_next: f64,
) -> Result<f64> {
    if !(a_prev < a_cur && a_cur < a_next) {
        return Err(Error::Domain(format!("levels must increase: {a_prev}, {a_cur}, {a_next}")));
    }
    let right = (beta_next - beta_cur) / (a_next - a_cur);
    let left = (beta_cur - beta_prev) / (a_cur - a_prev);
    Ok((right - left) / (a_next - a_prev))
}

/// Coefficients `(c_prev, c_cur, c_next)` with `D² = c·(β_prev, β_cur, β_next)`.
fn d2_stencil(a_prev: f64, a_cur: f64, a_next: f64) -> (f64, f64, f64) {
    let h1 = a_cur - a_prev;
    let h2 = a_next - a_cur;
    let span = a_next - a_prev;
    (1.0 / (h1 * span), -(1.0 / h1 + 1.0 / h2) / span, 1.0 / (h2 * span))
}

fn check_weights(weights: &[Vec<f64>], p: usize, j: usize) -> Result<()> {
    if weights.len() != p || weights.iter().any(|w| w.len() != j) {
        return Err(Error::InvalidWeights(format!("expected a {p}×{j} weight matrix")));
    }
    if let Some(w) = weights.iter().flatten().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidWeights(format!("weights must be positive and finite, found {w}")));
    }
    Ok(())
}

/// The primal LP over standardized data.
///
/// Variable layout (labels in parentheses): intercepts `b0[j]`, slopes
/// `b[p,j]`, residual splits `e+[t,j]`/`e-[t,j]`, shrinkage splits
/// `xi+[p,j]`/`xi-[p,j]`, curvature splits `d2+[p,j]`/`d2-[p,j]` for
/// interior `j`. Non-crossing rows are `≤` constraints between adjacent
/// levels at every training row.
pub fn build_lp(data: &DesignMatrix, grid: &QuantileGrid, theta: RegPair, weights: &[Vec<f64>]) -> Result<StandardLp> {
    let alphas = grid.alphas();
    let nj = alphas.len();
    let np = data.n_covariates();
    let nt = data.n_rows();
    if nj < 3 {
        return Err(Error::InvalidInput("grid needs at least 3 levels".into()));
    }
    check_weights(weights, np, nj)?;
    const INF: f64 = f64::INFINITY;

    let mut lp = StandardLp::new();
    let b0: Vec<usize> = (0..nj).map(|j| lp.add_var(format!("b0[{j}]"), 0.0, -INF, INF)).collect();
    let b: Vec<Vec<usize>> = (0..np)
        .map(|p| (0..nj).map(|j| lp.add_var(format!("b[{p},{j}]"), 0.0, -INF, INF)).collect())
        .collect();

    // Fitted-quantile expression at row t, level j.
    let q_terms = |t: usize, j: usize| -> Vec<(usize, f64)> {
        let mut terms = vec![(b0[j], 1.0)];
        terms.extend(data.rows()[t].iter().enumerate().map(|(p, &x)| (b[p][j], x)));
        terms
    };

    for t in 0..nt {
        for (j, &a) in alphas.iter().enumerate() {
            let ep = lp.add_var(format!("e+[{t},{j}]"), a, 0.0, INF);
            let em = lp.add_var(format!("e-[{t},{j}]"), 1.0 - a, 0.0, INF);
            // e+ − e− + β0_j + β_jᵀx_t = y_t
            let mut row = q_terms(t, j);
            row.push((ep, 1.0));
            row.push((em, -1.0));
            lp.add_eq(row, data.targets()[t]);
        }
    }
    for (p, (bp, wp)) in b.iter().zip(weights).enumerate() {
        for j in 0..nj {
            let cost = theta.lambda * wp[j];
            let xp = lp.add_var(format!("xi+[{p},{j}]"), cost, 0.0, INF);
            let xm = lp.add_var(format!("xi-[{p},{j}]"), cost, 0.0, INF);
            lp.add_eq([(xp, 1.0), (xm, -1.0), (bp[j], -1.0)], 0.0);
        }
    }
    for (p, bp) in b.iter().enumerate() {
        for j in 1..nj - 1 {
            let dp = lp.add_var(format!("d2+[{p},{j}]"), theta.gamma, 0.0, INF);
            let dm = lp.add_var(format!("d2-[{p},{j}]"), theta.gamma, 0.0, INF);
            let (cp, cc, cn) = d2_stencil(alphas[j - 1], alphas[j], alphas[j + 1]);
            lp.add_eq([(dp, 1.0), (dm, -1.0), (bp[j - 1], -cp), (bp[j], -cc), (bp[j + 1], -cn)], 0.0);
        }
    }
    for t in 0..nt {
        for j in 0..nj - 1 {
            let lower = q_terms(t, j);
            let upper = q_terms(t, j + 1).into_iter().map(|(v, c)| (v, -c));
            lp.add_le(lower.into_iter().chain(upper), 0.0);
        }
    }
    Ok(lp)
}

/// Dual of the problem solved by [`build_lp`]. Rows are indexed by the
/// coefficient vector `z` (level-major: `j·(|P|+1) + k`, `k = 0` for the
/// intercept), so the optimal coefficients are `z = −y` for the row
/// multipliers `y`. Terms whose penalty is zero are left out.
fn dual_lp(data: &DesignMatrix, grid: &QuantileGrid, theta: RegPair, weights: &[Vec<f64>]) -> StandardLp {
    const INF: f64 = f64::INFINITY;
    let alphas = grid.alphas();
    let nj = alphas.len();
    let np = data.n_covariates();
    let stride = np + 1;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nj * stride];
    let mut lp = StandardLp::new();

    for (t, (x, y)) in data.rows().iter().zip(data.targets()).enumerate() {
        for (j, &a) in alphas.iter().enumerate() {
            let v = lp.add_var(format!("pi_fit[{t},{j}]"), -y, a - 1.0, a);
            rows[j * stride].push((v, 1.0));
            for (p, &xp) in x.iter().enumerate() {
                rows[j * stride + 1 + p].push((v, xp));
            }
        }
    }
    if theta.lambda > 0.0 {
        for p in 0..np {
            for j in 0..nj {
                let cap = theta.lambda * weights[p][j];
                let v = lp.add_var(format!("pi_l1[{p},{j}]"), 0.0, -cap, cap);
                rows[j * stride + 1 + p].push((v, 1.0));
            }
        }
    }
    if theta.gamma > 0.0 {
        for p in 0..np {
            for j in 1..nj - 1 {
                let v = lp.add_var(format!("pi_d2[{p},{j}]"), 0.0, -theta.gamma, theta.gamma);
                let (cp, cc, cn) = d2_stencil(alphas[j - 1], alphas[j], alphas[j + 1]);
                rows[(j - 1) * stride + 1 + p].push((v, cp));
                rows[j * stride + 1 + p].push((v, cc));
                rows[(j + 1) * stride + 1 + p].push((v, cn));
            }
        }
    }
    for (t, x) in data.rows().iter().enumerate() {
        for j in 0..nj - 1 {
            let v = lp.add_var(format!("pi_nc[{t},{j}]"), 0.0, 0.0, INF);
            rows[(j + 1) * stride].push((v, 1.0));
            rows[j * stride].push((v, -1.0));
            for (p, &xp) in x.iter().enumerate() {
                rows[(j + 1) * stride + 1 + p].push((v, xp));
                rows[j * stride + 1 + p].push((v, -xp));
            }
        }
    }
    for row in rows {
        lp.add_eq(row, 0.0);
    }
    lp
}

/// Starting point for the dual: each fit multiplier sits at the bound given
/// by the sign of its residual under a guessed fit (per-level sample
/// quantiles when no guess is available). Everything else starts at zero.
fn dual_start(data: &DesignMatrix, grid: &QuantileGrid, guess: Option<(&[f64], &[Vec<f64>])>, n_vars: usize) -> Vec<f64> {
    let alphas = grid.alphas();
    let nj = alphas.len();
    let mut start = vec![0.0; n_vars];
    let unconditional: Vec<f64>;
    let (b0, b) = match guess {
        Some(g) => g,
        None => {
            let mut ys = data.targets().to_vec();
            ys.sort_by(f64::total_cmp);
            let n = ys.len();
            unconditional = alphas.iter().map(|a| ys[((a * n as f64).ceil() as usize).clamp(1, n) - 1]).collect();
            (&unconditional[..], &[][..])
        }
    };
    for (t, (x, y)) in data.rows().iter().zip(data.targets()).enumerate() {
        for (j, &a) in alphas.iter().enumerate() {
            let fit = b0[j] + b.iter().zip(x).map(|(c, xp)| c[j] * xp).sum::<f64>();
            let r = y - fit;
            start[t * nj + j] = if r > 0.0 {
                a
            } else if r < 0.0 {
                a - 1.0
            } else {
                0.0
            };
        }
    }
    start
}

/// Coefficients `(intercepts, coefs[p][j], objective)` of one LP solve on
/// standardized data.
type Fit = (Vec<f64>, Vec<Vec<f64>>, f64);

fn fit_standardized(
    data: &DesignMatrix,
    grid: &QuantileGrid,
    theta: RegPair,
    weights: &[Vec<f64>],
    opts: &SolverOptions,
    stage: Stage,
    guess: Option<(&[f64], &[Vec<f64>])>,
) -> Result<Fit> {
    let lp = dual_lp(data, grid, theta, weights);
    let start = dual_start(data, grid, guess, lp.n_vars());
    let sol = lp::solve_from(&lp, opts, &start).map_err(|source| Error::Solver { stage, source })?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::NotOptimal { stage, status: sol.status.to_string() });
    }
    let nj = grid.len();
    let stride = data.n_covariates() + 1;
    let z: Vec<f64> = sol.duals.iter().map(|y| -y).collect();
    let intercepts = (0..nj).map(|j| z[j * stride]).collect();
    let coefs = (0..stride - 1).map(|p| (0..nj).map(|j| z[j * stride + 1 + p]).collect()).collect();
    Ok((intercepts, coefs, -sol.objective_value))
}

/// Two-stage estimation.
///
/// 1. Pilot fit with the adaptive-lasso term removed (curvature penalty kept
///    at `theta.gamma`).
/// 2. Weights `w = 1 / max(|β̃|, WEIGHT_FLOOR)`.
/// 3. Final fit with those weights. When `theta.lambda == 0` the pilot fit
///    is the answer.
pub fn estimate(data: &DesignMatrix, grid: &QuantileGrid, theta: RegPair, opts: &SolverOptions) -> Result<MqrModel> {
    if grid.len() < 3 {
        return Err(Error::InvalidInput("grid needs at least 3 levels".into()));
    }
    if data.n_rows() == 0 {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    let (std_data, norm_stats) = normalize(data)?;
    let np = data.n_covariates();
    let ones = vec![vec![1.0; grid.len()]; np];
    let pilot_theta = RegPair { lambda: 0.0, gamma: theta.gamma };
    let (mut intercepts, mut coefs, mut objective) =
        fit_standardized(&std_data, grid, pilot_theta, &ones, opts, Stage::Pilot, None)?;
    let mut weights = ones;
    if theta.lambda > 0.0 {
        weights = coefs.iter().map(|c| c.iter().map(|b| 1.0 / b.abs().max(WEIGHT_FLOOR)).collect()).collect();
        (intercepts, coefs, objective) =
            fit_standardized(&std_data, grid, theta, &weights, opts, Stage::Final, Some((&intercepts, &coefs)))?;
    }
    Ok(MqrModel {
        grid: grid.clone(),
        intercepts,
        coefs,
        norm_stats,
        theta,
        covariate_labels: data.labels().to_vec(),
        weights,
        objective,
    })
}

/// Quantile fan for a raw covariate row; crossed predictions are sorted.
pub fn predict_fan(model: &MqrModel, x_raw: &[f64]) -> Result<QuantileFan> {
    let x = apply_norm(x_raw, &model.norm_stats)?;
    QuantileFan::new(model.grid.clone(), model.quantiles_standardized(&x))
}
