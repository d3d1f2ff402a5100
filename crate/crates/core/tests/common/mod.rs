#![allow(dead_code)]

use mqrlr::lp::StandardLp;
use rand::Rng;

/// Small LP with integer data in [-5, 5]: up to 5 variables, up to 5 rows
/// (mixed `=` / `≤`), mostly non-negative variables with the occasional
/// upper bound or free variable.
pub fn random_lp<R: Rng>(rng: &mut R) -> StandardLp {
    let n = rng.random_range(1..=5usize);
    let rows = rng.random_range(1..=5usize);
    let mut lp = StandardLp::new();
    for j in 0..n {
        let cost = rng.random_range(-5..=5) as f64;
        let (lo, hi) = match rng.random_range(0..10) {
            0 => (f64::NEG_INFINITY, f64::INFINITY),
            1 | 2 => (0.0, rng.random_range(1..=5) as f64),
            3 => (rng.random_range(-5..=0) as f64, f64::INFINITY),
            _ => (0.0, f64::INFINITY),
        };
        lp.add_var(format!("x{j}"), cost, lo, hi);
    }
    for _ in 0..rows {
        let coeffs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-5..=5) as f64)).collect();
        let rhs = rng.random_range(-5..=5) as f64;
        if rng.random_bool(0.3) {
            lp.add_eq(coeffs, rhs);
        } else {
            lp.add_le(coeffs, rhs);
        }
    }
    lp
}
