use nalgebra::DMatrix;

use super::{LpError, LpSolution, LpStatus, SolverOptions, StandardLp};

const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_LIMIT: usize = 50;
const STEP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
    /// Nonbasic strictly between its bounds (free variables, and boxed
    /// variables started at zero).
    Free,
}

enum Step {
    Flip(f64),
    Pivot { row: usize, t: f64, to_upper: bool },
    Unbounded,
}

enum Outcome {
    Optimal,
    Unbounded,
}

struct Simplex {
    m: usize,
    n_struct: usize,
    n_total: usize,
    first_artificial: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    /// Row-major dense inverse of the basis matrix.
    binv: Vec<f64>,
    y: Vec<f64>,
    feas_tol: f64,
    opt_tol: f64,
    d_tol: f64,
    max_iter: usize,
    iterations: usize,
    since_refactor: usize,
    cursor: usize,
    degenerate_run: usize,
    bland: bool,
}

pub(super) fn run(lp: &StandardLp, opts: &SolverOptions, start: Option<&[f64]>) -> Result<LpSolution, LpError> {
    let mut s = Simplex::new(lp, opts, start);
    let b_scale = 1.0 + s.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));

    if s.artificial_sum() > 0.0 {
        s.set_costs(|s, j| if j >= s.first_artificial { 1.0 } else { 0.0 });
        match s.optimize(1)? {
            Outcome::Optimal => {}
            Outcome::Unbounded => unreachable!("phase one objective is bounded below"),
        }
        if s.artificial_sum() > s.feas_tol * b_scale {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, s.iterations));
        }
    }
    for a in s.first_artificial..s.n_total {
        s.upper[a] = 0.0;
        if s.state[a] != State::Basic {
            s.x[a] = 0.0;
            s.state[a] = State::Lower;
        }
    }
    let objective = lp.objective().to_vec();
    s.set_costs(|s, j| if j < s.n_struct { objective[j] } else { 0.0 });
    match s.optimize(2)? {
        Outcome::Unbounded => Ok(LpSolution::without_point(LpStatus::Unbounded, s.iterations)),
        Outcome::Optimal => {
            let x = s.x[..s.n_struct].to_vec();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                objective_value: lp.evaluate(&x),
                x,
                duals: s.y.clone(),
                iterations: s.iterations,
            })
        }
    }
}

fn initial_value(l: f64, u: f64) -> (f64, State) {
    if l > 0.0 {
        (l, State::Lower)
    } else if u < 0.0 {
        (u, State::Upper)
    } else if l == 0.0 {
        (0.0, State::Lower)
    } else if u == 0.0 {
        (0.0, State::Upper)
    } else {
        (0.0, State::Free)
    }
}

fn start_value(v: f64, l: f64, u: f64) -> (f64, State) {
    let v = v.clamp(l, u);
    if v == l {
        (v, State::Lower)
    } else if v == u {
        (v, State::Upper)
    } else {
        (v, State::Free)
    }
}

impl Simplex {
    fn new(lp: &StandardLp, opts: &SolverOptions, start: Option<&[f64]>) -> Self {
        let n = lp.n_vars();
        let n_eq = lp.n_eq();
        let n_le = lp.n_le();
        let m = n_eq + n_le;

        // Column-wise copy of the structural part.
        let mut counts = vec![0usize; n];
        for row in lp.eq_rows().iter().chain(lp.le_rows()) {
            for &(j, _) in row {
                counts[j] += 1;
            }
        }
        let mut col_ptr = Vec::with_capacity(n + m + m + 1);
        col_ptr.push(0);
        for c in &counts {
            col_ptr.push(col_ptr.last().unwrap() + c);
        }
        let nnz = *col_ptr.last().unwrap();
        let mut row_idx = vec![0usize; nnz];
        let mut vals = vec![0.0; nnz];
        let mut fill = col_ptr[..n].to_vec();
        for (i, row) in lp.eq_rows().iter().chain(lp.le_rows()).enumerate() {
            for &(j, v) in row {
                row_idx[fill[j]] = i;
                vals[fill[j]] = v;
                fill[j] += 1;
            }
        }

        let mut rhs: Vec<f64> = lp.eq_rhs().to_vec();
        rhs.extend_from_slice(lp.le_rhs());

        let mut lower = lp.lower().to_vec();
        let mut upper = lp.upper().to_vec();
        let mut x = Vec::with_capacity(n + 2 * m);
        let mut state = Vec::with_capacity(n + 2 * m);
        for j in 0..n {
            let (v, st) = match start.map(|s| s[j]) {
                Some(v) if v.is_finite() => start_value(v, lower[j], upper[j]),
                _ => initial_value(lower[j], upper[j]),
            };
            x.push(v);
            state.push(st);
        }

        let mut residual = rhs.clone();
        for j in 0..n {
            if x[j] != 0.0 {
                for k in col_ptr[j]..col_ptr[j + 1] {
                    residual[row_idx[k]] -= vals[k] * x[j];
                }
            }
        }

        let mut basis = vec![usize::MAX; m];
        let mut diag = vec![1.0; m];
        // Slacks for the `≤` rows.
        for k in 0..n_le {
            let i = n_eq + k;
            let var = n + k;
            row_idx.push(i);
            vals.push(1.0);
            col_ptr.push(row_idx.len());
            lower.push(0.0);
            upper.push(f64::INFINITY);
            if residual[i] >= 0.0 {
                x.push(residual[i]);
                state.push(State::Basic);
                basis[i] = var;
            } else {
                x.push(0.0);
                state.push(State::Lower);
            }
        }
        let first_artificial = n + n_le;
        for i in 0..m {
            if basis[i] != usize::MAX {
                continue;
            }
            let sign = if residual[i] < 0.0 { -1.0 } else { 1.0 };
            row_idx.push(i);
            vals.push(sign);
            col_ptr.push(row_idx.len());
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(residual[i].abs());
            state.push(State::Basic);
            basis[i] = x.len() - 1;
            diag[i] = sign;
        }
        let n_total = x.len();

        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0 / diag[i];
        }

        let max_iter = opts.max_iter.unwrap_or_else(|| (50 * (m + n_total)).max(10_000));
        Simplex {
            m,
            n_struct: n,
            n_total,
            first_artificial,
            col_ptr,
            row_idx,
            vals,
            rhs,
            lower,
            upper,
            cost: vec![0.0; n_total],
            x,
            state,
            basis,
            binv,
            y: vec![0.0; m],
            feas_tol: opts.feas_tol,
            opt_tol: opts.opt_tol,
            d_tol: opts.opt_tol,
            max_iter,
            iterations: 0,
            since_refactor: 0,
            cursor: 0,
            degenerate_run: 0,
            bland: false,
        }
    }

    fn artificial_sum(&self) -> f64 {
        self.x[self.first_artificial..].iter().sum()
    }

    fn set_costs(&mut self, f: impl Fn(&Self, usize) -> f64) {
        let cost: Vec<f64> = (0..self.n_total).map(|j| f(self, j)).collect();
        let scale = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
        self.cost = cost;
        self.d_tol = self.opt_tol * scale;
        self.cursor = 0;
        self.degenerate_run = 0;
        self.bland = false;
        self.compute_y();
    }

    fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    fn compute_y(&mut self) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let cb = self.cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for (yk, b) in self.y.iter_mut().zip(row) {
                    *yk += cb * b;
                }
            }
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        let mut d = self.cost[j];
        for k in self.col_ptr[j]..self.col_ptr[j + 1] {
            d -= self.y[self.row_idx[k]] * self.vals[k];
        }
        d
    }

    fn attractive(&self, j: usize) -> Option<f64> {
        let st = self.state[j];
        if st == State::Basic || self.lower[j] == self.upper[j] {
            return None;
        }
        let d = self.reduced_cost(j);
        let ok = match st {
            State::Lower => d < -self.d_tol,
            State::Upper => d > self.d_tol,
            State::Free => (d < -self.d_tol && self.x[j] < self.upper[j]) || (d > self.d_tol && self.x[j] > self.lower[j]),
            State::Basic => false,
        };
        ok.then_some(d)
    }

    fn price(&mut self) -> Option<(usize, f64)> {
        let n = self.n_total;
        if n == 0 {
            return None;
        }
        if self.bland {
            return (0..n).find_map(|j| self.attractive(j).map(|d| (j, d)));
        }
        let chunk = (n / 8).clamp(64, 4096).min(n);
        let mut j = self.cursor % n;
        let mut scanned = 0;
        let mut best: Option<(usize, f64)> = None;
        while scanned < n {
            let stop = (scanned + chunk).min(n);
            while scanned < stop {
                if let Some(d) = self.attractive(j) {
                    if best.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                        best = Some((j, d));
                    }
                }
                j = if j + 1 == n { 0 } else { j + 1 };
                scanned += 1;
            }
            if best.is_some() {
                self.cursor = j;
                return best;
            }
        }
        None
    }

    /// `B⁻¹ a_q`.
    fn ftran(&self, q: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for k in self.col_ptr[q]..self.col_ptr[q + 1] {
            let (r, v) = (self.row_idx[k], self.vals[k]);
            for (i, a) in alpha.iter_mut().enumerate() {
                *a += self.binv[i * m + r] * v;
            }
        }
        alpha
    }

    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64]) -> Step {
        let span = if dir > 0.0 { self.upper[q] - self.x[q] } else { self.x[q] - self.lower[q] };
        let span = span.max(0.0);

        // (row, exact step, relaxed step, leaves at upper)
        let candidates = alpha.iter().enumerate().filter_map(|(i, &a)| {
            if a.abs() <= PIVOT_TOL {
                return None;
            }
            let b = self.basis[i];
            let rate = -dir * a;
            if rate < 0.0 {
                let l = self.lower[b];
                l.is_finite().then(|| {
                    let gap = self.x[b] - l;
                    (i, gap.max(0.0) / -rate, (gap + self.feas_tol).max(0.0) / -rate, false)
                })
            } else {
                let u = self.upper[b];
                u.is_finite().then(|| {
                    let gap = u - self.x[b];
                    (i, gap.max(0.0) / rate, (gap + self.feas_tol).max(0.0) / rate, true)
                })
            }
        });

        if self.bland {
            let mut best: Option<(usize, f64, bool)> = None;
            for (i, t, _, up) in candidates {
                best = match best {
                    None => Some((i, t, up)),
                    Some((bi, bt, bup)) => {
                        let eps = 1e-12 * bt.max(1.0);
                        if t < bt - eps || ((t - bt).abs() <= eps && self.basis[i] < self.basis[bi]) {
                            Some((i, t, up))
                        } else {
                            Some((bi, bt, bup))
                        }
                    }
                };
            }
            return match best {
                Some((_, t, _)) if span.is_finite() && span <= t => Step::Flip(span),
                Some((row, t, to_upper)) => Step::Pivot { row, t, to_upper },
                None if span.is_finite() => Step::Flip(span),
                None => Step::Unbounded,
            };
        }

        // Harris two-pass ratio test.
        let cands: Vec<_> = candidates.collect();
        let relaxed = cands.iter().fold(f64::INFINITY, |a, c| a.min(c.2));
        if span.is_finite() && span <= relaxed {
            return Step::Flip(span);
        }
        if !relaxed.is_finite() {
            return Step::Unbounded;
        }
        let mut pick: Option<(usize, f64, bool)> = None;
        for &(i, t, _, up) in &cands {
            if t > relaxed {
                continue;
            }
            pick = match pick {
                None => Some((i, t, up)),
                Some((bi, bt, bup)) => {
                    let (a, ba) = (alpha[i].abs(), alpha[bi].abs());
                    if a > ba || (a == ba && self.basis[i] < self.basis[bi]) {
                        Some((i, t, up))
                    } else {
                        Some((bi, bt, bup))
                    }
                }
            };
        }
        let (row, t, to_upper) = pick.expect("relaxed minimum is attained by some row");
        Step::Pivot { row, t, to_upper }
    }

    fn move_along(&mut self, q: usize, dir: f64, t: f64, alpha: &[f64]) {
        if t == 0.0 {
            return;
        }
        self.x[q] += dir * t;
        for (i, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                self.x[self.basis[i]] -= dir * t * a;
            }
        }
    }

    fn pivot(&mut self, row: usize, q: usize, d: f64, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[row];
        let mut pivot_row = self.binv[row * m..(row + 1) * m].to_vec();
        pivot_row.iter_mut().for_each(|v| *v /= piv);
        for (i, &a) in alpha.iter().enumerate() {
            if i == row || a == 0.0 {
                continue;
            }
            let target = &mut self.binv[i * m..(i + 1) * m];
            for (t, p) in target.iter_mut().zip(&pivot_row) {
                *t -= a * p;
            }
        }
        for (yk, p) in self.y.iter_mut().zip(&pivot_row) {
            *yk += d * p;
        }
        self.binv[row * m..(row + 1) * m].copy_from_slice(&pivot_row);
        self.basis[row] = q;
        self.state[q] = State::Basic;
        self.since_refactor += 1;
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut b = DMatrix::<f64>::zeros(m, m);
        for (i, &var) in self.basis.iter().enumerate() {
            for k in self.col_ptr[var]..self.col_ptr[var + 1] {
                b[(self.row_idx[k], i)] = self.vals[k];
            }
        }
        let inv = b.lu().try_inverse().ok_or(LpError::SingularBasis { iterations: self.iterations })?;
        for i in 0..m {
            for k in 0..m {
                self.binv[i * m + k] = inv[(i, k)];
            }
        }
        let mut r = self.rhs.clone();
        for j in 0..self.n_total {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                    r[self.row_idx[k]] -= self.vals[k] * self.x[j];
                }
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.x[self.basis[i]] = row.iter().zip(&r).map(|(a, b)| a * b).sum();
        }
        self.compute_y();
        Ok(())
    }

    fn optimize(&mut self, phase: u8) -> Result<Outcome, LpError> {
        let mut verified = false;
        loop {
            if self.iterations >= self.max_iter {
                return Err(LpError::Stalled {
                    iterations: self.iterations,
                    phase,
                    objective: self.objective(),
                    degenerate: self.degenerate_run,
                });
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
            let Some((q, d)) = self.price() else {
                if verified {
                    return Ok(Outcome::Optimal);
                }
                self.refactor()?;
                verified = true;
                continue;
            };
            verified = false;
            self.iterations += 1;

            let dir = if d < 0.0 { 1.0 } else { -1.0 };
            let alpha = self.ftran(q);
            let t = match self.ratio_test(q, dir, &alpha) {
                Step::Unbounded => return Ok(Outcome::Unbounded),
                Step::Flip(t) => {
                    self.move_along(q, dir, t, &alpha);
                    if dir > 0.0 {
                        self.x[q] = self.upper[q];
                        self.state[q] = State::Upper;
                    } else {
                        self.x[q] = self.lower[q];
                        self.state[q] = State::Lower;
                    }
                    t
                }
                Step::Pivot { row, t, to_upper } => {
                    self.move_along(q, dir, t, &alpha);
                    let leaving = self.basis[row];
                    if to_upper {
                        self.x[leaving] = self.upper[leaving];
                        self.state[leaving] = State::Upper;
                    } else {
                        self.x[leaving] = self.lower[leaving];
                        self.state[leaving] = State::Lower;
                    }
                    self.pivot(row, q, d, &alpha);
                    t
                }
            };

            if t <= STEP_EPS {
                self.degenerate_run += 1;
                if self.degenerate_run > DEGENERATE_LIMIT {
                    self.bland = true;
                }
            } else {
                self.degenerate_run = 0;
                self.bland = false;
            }
        }
    }
}
