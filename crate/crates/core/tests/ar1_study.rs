use mqrlr::data::{build_lag_matrix, QuantileGrid};
use mqrlr::evalharness::{generate_ar1, run_ar1_study, true_ar1_quantile, Ar1StudyConfig};
use mqrlr::lp::SolverOptions;
use mqrlr::mqr::{estimate, RegPair};

/// Mean over replications of `|q̂_α(x) − q_α(x)|` at `x = 0` for the
/// central levels.
fn central_error(n: usize, reps: u64) -> f64 {
    let cfg = Ar1StudyConfig { n, seed: 77, ..Ar1StudyConfig::default() };
    let grid = QuantileGrid::default_grid();
    let central: Vec<usize> = (0..grid.len()).filter(|&j| (0.3..=0.7).contains(&grid.alphas()[j])).collect();
    let mut total = 0.0;
    for r in 0..reps {
        let data = build_lag_matrix(&generate_ar1(&cfg, r).unwrap(), &[1]).unwrap();
        let m = estimate(&data, &grid, RegPair::unregularized(), &SolverOptions::default()).unwrap();
        let (b0, b) = m.raw_coefficients();
        for &j in &central {
            let truth = true_ar1_quantile(grid.alphas()[j], 0.0, cfg.beta0, cfg.beta1, cfg.sigma).unwrap();
            total += (b0[j] + b[0][j] * 0.0 - truth).abs();
        }
    }
    total / (reps as f64 * central.len() as f64)
}

#[test]
fn central_quantile_error_shrinks_with_sample_size() {
    let small = central_error(200, 50);
    let large = central_error(400, 50);
    assert!(large < small, "n=400 error {large} not below n=200 error {small}");
}

#[test]
fn single_replication_study_runs() {
    let cfg = Ar1StudyConfig { n: 120, replications: 1, ..Ar1StudyConfig::default() };
    let grid = QuantileGrid::default_grid();
    let r = run_ar1_study(&cfg, &grid, &SolverOptions::default()).unwrap();
    assert_eq!((r.replications.len(), r.failed.len()), (1, 0));
    assert!(cfg.gamma_grid.contains(&r.replications[0].gamma));
    assert_eq!(r.summary().len(), 2 * grid.len());
    let s = r.find(0.5, "MQR-B1").unwrap();
    assert_eq!(s.median, r.replications[0].slopes_b1[grid.alphas().iter().position(|&a| a == 0.5).unwrap()]);
}
