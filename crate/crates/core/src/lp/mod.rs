//! Linear programming: problem container, two-phase bounded-variable primal
//! simplex, and a vertex-enumeration oracle for small problems.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

mod oracle;
mod simplex;

pub use oracle::brute_force_oracle;

/// A sparse constraint row: `(variable index, coefficient)` pairs.
pub type SparseRow = Vec<(usize, f64)>;

/// `minimize c·x  s.t.  A_eq x = b_eq,  A_le x ≤ b_le,  lower ≤ x ≤ upper`.
///
/// Rows are stored sparsely; the solver keeps a dense basis inverse.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StandardLp {
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    var_labels: Vec<String>,
    eq_rows: Vec<SparseRow>,
    eq_rhs: Vec<f64>,
    le_rows: Vec<SparseRow>,
    le_rhs: Vec<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed LP: {0}")]
    Malformed(String),
    #[error("simplex stalled after {iterations} iterations in phase {phase} (objective {objective:.6e}, {degenerate} consecutive degenerate pivots)")]
    Stalled { iterations: usize, phase: u8, objective: f64, degenerate: usize },
    #[error("singular basis after {iterations} iterations")]
    SingularBasis { iterations: usize },
    #[error("oracle size cap exceeded: {vars} variables / {rows} constraints (max 8 / 10)")]
    SizeCap { vars: usize, rows: usize },
    #[error("oracle needs a pointed feasible region (constraint matrix of full column rank)")]
    NotPointed,
}

impl StandardLp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from dense data. Empty matrices are allowed.
    #[allow(clippy::too_many_arguments)]
    pub fn from_dense(
        objective: Vec<f64>,
        a_eq: &[Vec<f64>],
        b_eq: &[f64],
        a_le: &[Vec<f64>],
        b_le: &[f64],
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self, LpError> {
        let n = objective.len();
        if lower.len() != n || upper.len() != n {
            return Err(LpError::Malformed("bound vectors must match the objective length".into()));
        }
        let mut lp = StandardLp::new();
        for j in 0..n {
            lp.add_var(format!("x{j}"), objective[j], lower[j], upper[j]);
        }
        if a_eq.len() != b_eq.len() || a_le.len() != b_le.len() {
            return Err(LpError::Malformed("right-hand side length mismatch".into()));
        }
        for (row, b) in a_eq.iter().zip(b_eq) {
            if row.len() != n {
                return Err(LpError::Malformed("row width differs from variable count".into()));
            }
            lp.add_eq(row.iter().copied().enumerate(), *b);
        }
        for (row, b) in a_le.iter().zip(b_le) {
            if row.len() != n {
                return Err(LpError::Malformed("row width differs from variable count".into()));
            }
            lp.add_le(row.iter().copied().enumerate(), *b);
        }
        Ok(lp)
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, label: impl Into<String>, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_labels.push(label.into());
        self.objective.len() - 1
    }

    pub fn add_eq(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        self.eq_rows.push(compact(coeffs));
        self.eq_rhs.push(rhs);
    }

    pub fn add_le(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        self.le_rows.push(compact(coeffs));
        self.le_rhs.push(rhs);
    }

    /// `a·x ≥ rhs`, stored as `−a·x ≤ −rhs`.
    pub fn add_ge(&mut self, coeffs: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        self.add_le(coeffs.into_iter().map(|(j, v)| (j, -v)), -rhs);
    }

    pub fn set_cost(&mut self, var: usize, cost: f64) {
        self.objective[var] = cost;
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }
    pub fn n_eq(&self) -> usize {
        self.eq_rows.len()
    }
    pub fn n_le(&self) -> usize {
        self.le_rows.len()
    }
    pub fn objective(&self) -> &[f64] {
        &self.objective
    }
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
    pub fn var_labels(&self) -> &[String] {
        &self.var_labels
    }
    pub fn eq_rows(&self) -> &[SparseRow] {
        &self.eq_rows
    }
    pub fn eq_rhs(&self) -> &[f64] {
        &self.eq_rhs
    }
    pub fn le_rows(&self) -> &[SparseRow] {
        &self.le_rows
    }
    pub fn le_rhs(&self) -> &[f64] {
        &self.le_rhs
    }

    pub fn var_index(&self, label: &str) -> Option<usize> {
        self.var_labels.iter().position(|l| l == label)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(LpError::Malformed(format!("bad bounds [{l}, {u}] on `{}`", self.var_labels[j])));
            }
            if !self.objective[j].is_finite() {
                return Err(LpError::Malformed(format!("non-finite cost on `{}`", self.var_labels[j])));
            }
        }
        let rows = self.eq_rows.iter().zip(&self.eq_rhs).chain(self.le_rows.iter().zip(&self.le_rhs));
        for (row, b) in rows {
            if !b.is_finite() {
                return Err(LpError::Malformed("non-finite right-hand side".into()));
            }
            if let Some((j, v)) = row.iter().find(|(j, v)| *j >= n || !v.is_finite()) {
                return Err(LpError::Malformed(format!("bad coefficient {v} on column {j}")));
            }
        }
        Ok(())
    }

    /// Residual-free evaluation of `c·x`.
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |row: &SparseRow| row.iter().map(|&(j, v)| v * x[j]).sum::<f64>();
        let mut worst: f64 = 0.0;
        for (row, b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((dot(row) - b).abs());
        }
        for (row, b) in self.le_rows.iter().zip(&self.le_rhs) {
            worst = worst.max(dot(row) - b);
        }
        for ((v, l), u) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(l - v).max(v - u);
        }
        worst
    }

    /// Dense copies of the constraint matrices (eq, le).
    pub fn dense_rows(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let n = self.n_vars();
        let densify = |rows: &[SparseRow]| {
            rows.iter()
                .map(|r| {
                    let mut d = vec![0.0; n];
                    for &(j, v) in r {
                        d[j] += v;
                    }
                    d
                })
                .collect()
        };
        (densify(&self.eq_rows), densify(&self.le_rows))
    }

    /// Plain-text dump: a header, one `var` line per variable, then one line
    /// per constraint (`eq`/`le`, coefficients as `coef*label`, relation, rhs).
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "# lp vars={} eq={} le={}", self.n_vars(), self.n_eq(), self.n_le())?;
        for j in 0..self.n_vars() {
            writeln!(
                w,
                "var {j} {} cost={} lb={} ub={}",
                self.var_labels[j], self.objective[j], self.lower[j], self.upper[j]
            )?;
        }
        let fmt_row = |row: &SparseRow| {
            row.iter()
                .map(|&(j, v)| format!("{v}*{}", self.var_labels[j]))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        for (k, (row, b)) in self.eq_rows.iter().zip(&self.eq_rhs).enumerate() {
            writeln!(w, "eq {k}: {} = {b}", fmt_row(row))?;
        }
        for (k, (row, b)) in self.le_rows.iter().zip(&self.le_rhs).enumerate() {
            writeln!(w, "le {k}: {} <= {b}", fmt_row(row))?;
        }
        Ok(())
    }
}

fn compact(coeffs: impl IntoIterator<Item = (usize, f64)>) -> SparseRow {
    let mut row: SparseRow = coeffs.into_iter().collect();
    row.sort_by_key(|&(j, _)| j);
    let mut out: SparseRow = Vec::with_capacity(row.len());
    for (j, v) in row {
        match out.last_mut() {
            Some((k, acc)) if *k == j => *acc += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|&(_, v)| v != 0.0);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl fmt::Display for LpStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; empty unless optimal.
    pub x: Vec<f64>,
    /// `c·x` at `x`; NaN unless optimal.
    pub objective_value: f64,
    /// Row multipliers `y` (equality rows first, then `≤` rows) with reduced
    /// costs `c − Aᵀy`. Empty unless optimal or when produced by the oracle.
    pub duals: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub(crate) fn without_point(status: LpStatus, iterations: usize) -> Self {
        Self { status, x: Vec::new(), objective_value: f64::NAN, duals: Vec::new(), iterations }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// Defaults to `max(10_000, 50·(rows + columns))` when `None`.
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { feas_tol: 1e-7, opt_tol: 1e-9, max_iter: None }
    }
}

/// Solves the LP with a two-phase bounded-variable revised simplex.
///
/// Pricing is Dantzig's rule over rotating partial windows; after a run of
/// degenerate pivots the solver falls back to Bland's rule until the
/// objective moves again. Ratio-test ties go to the lowest variable index.
pub fn solve(lp: &StandardLp, opts: &SolverOptions) -> Result<LpSolution, LpError> {
    if !(opts.feas_tol > 0.0 && opts.opt_tol > 0.0) {
        return Err(LpError::Malformed("tolerances must be positive".into()));
    }
    lp.validate()?;
    simplex::run(lp, opts, None)
}

/// Like [`solve`], but nonbasic variables start at the given values
/// (clamped into their bounds) instead of the bound nearest zero. A good
/// guess cuts the iteration count; any guess gives the same optimum.
pub fn solve_from(lp: &StandardLp, opts: &SolverOptions, start: &[f64]) -> Result<LpSolution, LpError> {
    if !(opts.feas_tol > 0.0 && opts.opt_tol > 0.0) {
        return Err(LpError::Malformed("tolerances must be positive".into()));
    }
    lp.validate()?;
    if start.len() != lp.n_vars() {
        return Err(LpError::Malformed(format!("start has {} values for {} variables", start.len(), lp.n_vars())));
    }
    simplex::run(lp, opts, Some(start))
}
