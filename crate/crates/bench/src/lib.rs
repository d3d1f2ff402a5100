//! Shared fixtures for the benchmarks under `benches/`.

use mqrlr::data::{build_lag_matrix, DesignMatrix, TimeSeries};
use mqrlr::evalharness::{generate_ar1, Ar1StudyConfig};

/// Stationary AR(1) series of length `n` with slope 0.3.
pub fn ar1_series(n: usize, seed: u64) -> TimeSeries {
    generate_ar1(&Ar1StudyConfig { n, seed, ..Ar1StudyConfig::default() }, 0).expect("valid AR(1) config")
}

/// Lagged design of [`ar1_series`] with the given lags.
pub fn ar1_design(n: usize, lags: &[usize], seed: u64) -> DesignMatrix {
    build_lag_matrix(&ar1_series(n, seed), lags).expect("series longer than its lags")
}
