//! Optional TOML run configuration.
//!
//! Every key is optional and flat; command-line flags win over file values.
//!
//! ```toml
//! seed = 7
//! out = "results"
//! feas_tol = 1e-7
//! opt_tol = 1e-9
//! threads = 4
//! grid = [0.05, 0.25, 0.5, 0.75, 0.95]
//! lags = [1, 2, 24]
//! lambda = 2.5
//! gamma = 1.0
//! lambdas = [0.0, 1.0, 20.0]
//! gammas = [0.0, 1.0, 7.0]
//! metric = "both"          # sic | mae | both
//! window = 240
//! n_windows = 100
//! horizon = 1
//! paths = 1000
//! clamp = [0.0, 1.0]
//! pooled = false
//! beta0 = 0.0
//! beta1 = 0.3
//! sigma = 1.0
//! n = 400
//! replications = 200
//! gamma_grid = [0.0, 0.5, 2.0, 8.0, 32.0]
//! folds = 5
//! ```

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub feas_tol: Option<f64>,
    pub opt_tol: Option<f64>,
    pub threads: Option<usize>,
    pub grid: Option<Vec<f64>>,
    pub lags: Option<Vec<usize>>,
    pub lambda: Option<f64>,
    pub gamma: Option<f64>,
    pub lambdas: Option<Vec<f64>>,
    pub gammas: Option<Vec<f64>>,
    pub metric: Option<String>,
    pub window: Option<usize>,
    pub n_windows: Option<usize>,
    pub horizon: Option<usize>,
    pub paths: Option<usize>,
    pub clamp: Option<[f64; 2]>,
    pub pooled: Option<bool>,
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub sigma: Option<f64>,
    pub n: Option<usize>,
    pub replications: Option<usize>,
    pub gamma_grid: Option<Vec<f64>>,
    pub folds: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
