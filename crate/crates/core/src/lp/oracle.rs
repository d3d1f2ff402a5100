use nalgebra::{DMatrix, DVector};

use super::{LpError, LpSolution, LpStatus, StandardLp};

const MAX_VARS: usize = 8;
const MAX_ROWS: usize = 10;
const TOL: f64 = 1e-9;

/// Solves a small LP by enumerating every basic solution (intersections of
/// `n` linearly independent active constraints) and keeping the best
/// feasible one. Unboundedness is decided by minimizing `c·d` over the
/// recession cone intersected with the unit box.
///
/// Only meant as an independent check of [`super::solve`]; the feasible
/// region must be pointed.
pub fn brute_force_oracle(lp: &StandardLp) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.n_vars();
    let rows = lp.n_eq() + lp.n_le();
    if n > MAX_VARS || rows > MAX_ROWS {
        return Err(LpError::SizeCap { vars: n, rows });
    }
    let (a_eq, a_le) = lp.dense_rows();
    let mut g = a_le;
    let mut h = lp.le_rhs().to_vec();
    for j in 0..n {
        if lp.lower()[j].is_finite() {
            let mut r = vec![0.0; n];
            r[j] = -1.0;
            g.push(r);
            h.push(-lp.lower()[j]);
        }
        if lp.upper()[j].is_finite() {
            let mut r = vec![0.0; n];
            r[j] = 1.0;
            g.push(r);
            h.push(lp.upper()[j]);
        }
    }
    let c = lp.objective();

    let all: Vec<Vec<f64>> = a_eq.iter().chain(g.iter()).cloned().collect();
    if n > 0 && rank(&all, n) < n {
        return Err(LpError::NotPointed);
    }

    let Some((x, obj)) = best_vertex(c, &a_eq, lp.eq_rhs(), &g, &h) else {
        return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
    };

    // Recession cone: A_eq d = 0, G d ≤ 0, within the box [-1, 1]^n.
    let mut g_rec: Vec<Vec<f64>> = g.clone();
    let mut h_rec = vec![0.0; g.len()];
    for j in 0..n {
        let mut r = vec![0.0; n];
        r[j] = 1.0;
        g_rec.push(r.clone());
        h_rec.push(1.0);
        r[j] = -1.0;
        g_rec.push(r);
        h_rec.push(1.0);
    }
    let zeros = vec![0.0; a_eq.len()];
    let (_, ray) = best_vertex(c, &a_eq, &zeros, &g_rec, &h_rec).expect("d = 0 is feasible");
    if ray < -TOL {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, 0));
    }
    Ok(LpSolution { status: LpStatus::Optimal, objective_value: obj, x, duals: Vec::new(), iterations: 0 })
}

fn rank(rows: &[Vec<f64>], n: usize) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    m.rank(1e-10)
}

fn best_vertex(c: &[f64], a_eq: &[Vec<f64>], b_eq: &[f64], g: &[Vec<f64>], h: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = c.len();
    if n == 0 {
        let feasible = b_eq.iter().all(|b| b.abs() <= TOL) && h.iter().all(|v| *v >= -TOL);
        return feasible.then(|| (Vec::new(), 0.0));
    }
    // Independent subset of the equality rows; redundant rows are still
    // checked for feasibility below.
    let mut basis_eq: Vec<usize> = Vec::new();
    for i in 0..a_eq.len() {
        let mut trial: Vec<Vec<f64>> = basis_eq.iter().map(|&k| a_eq[k].clone()).collect();
        trial.push(a_eq[i].clone());
        if rank(&trial, n) == trial.len() {
            basis_eq.push(i);
        }
    }
    let k = n.checked_sub(basis_eq.len())?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut chosen = Vec::with_capacity(k);
    subsets(g.len(), k, 0, &mut chosen, &mut |idx| {
        let rows: Vec<&Vec<f64>> = basis_eq.iter().map(|&i| &a_eq[i]).chain(idx.iter().map(|&i| &g[i])).collect();
        let rhs: Vec<f64> = basis_eq.iter().map(|&i| b_eq[i]).chain(idx.iter().map(|&i| h[i])).collect();
        let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        let lu = a.clone().lu();
        let Some(x) = lu.solve(&DVector::from_vec(rhs)) else { return };
        if !x.iter().all(|v| v.is_finite()) || a.determinant().abs() < 1e-10 {
            return;
        }
        let x: Vec<f64> = x.iter().copied().collect();
        let eq_ok = a_eq.iter().zip(b_eq).all(|(r, b)| (dot(r, &x) - b).abs() <= TOL * (1.0 + b.abs()));
        let le_ok = g.iter().zip(h).all(|(r, b)| dot(r, &x) <= b + TOL * (1.0 + b.abs()));
        if !(eq_ok && le_ok) {
            return;
        }
        let obj = dot(c, &x);
        if best.as_ref().is_none_or(|(_, bo)| obj < *bo) {
            best = Some((x, obj));
        }
    });
    best
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn subsets(n: usize, k: usize, start: usize, chosen: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    for i in start..n {
        if n - i < k - chosen.len() {
            break;
        }
        chosen.push(i);
        subsets(n, k, i + 1, chosen, f);
        chosen.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn matches_hand_examples() {
        let mut lp = StandardLp::new();
        let x = lp.add_var("x", 1.0, -INF, INF);
        lp.add_ge([(x, 1.0)], 3.0);
        let s = brute_force_oracle(&lp).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective_value - 3.0).abs() < 1e-12);

        let mut lp = StandardLp::new();
        let x = lp.add_var("x", 0.0, -INF, INF);
        lp.add_ge([(x, 1.0)], 1.0);
        lp.add_le([(x, 1.0)], 0.0);
        assert_eq!(brute_force_oracle(&lp).unwrap().status, LpStatus::Infeasible);

        let mut lp = StandardLp::new();
        let x = lp.add_var("x", -1.0, 0.0, INF);
        let y = lp.add_var("y", -1.0, 0.0, INF);
        lp.add_le([(x, 1.0), (y, 1.0)], 1.0);
        let s = brute_force_oracle(&lp).unwrap();
        assert!((s.objective_value + 1.0).abs() < 1e-12);

        let mut lp = StandardLp::new();
        lp.add_var("x", -1.0, 0.0, INF);
        assert_eq!(brute_force_oracle(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn size_cap() {
        let mut lp = StandardLp::new();
        for j in 0..9 {
            lp.add_var(format!("x{j}"), 1.0, 0.0, 1.0);
        }
        assert!(matches!(brute_force_oracle(&lp), Err(LpError::SizeCap { .. })));
    }

    #[test]
    fn lineality_rejected() {
        let mut lp = StandardLp::new();
        lp.add_var("x", 0.0, -INF, INF);
        assert_eq!(brute_force_oracle(&lp).unwrap_err(), LpError::NotPointed);
    }
}
