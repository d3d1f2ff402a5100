//! Jointly estimated, non-crossing multi-quantile regression.
//!
//! A whole grid of conditional quantiles is fitted in one linear program
//! with an adaptive-lasso penalty on the slopes and an L1 penalty on the
//! second differences of each slope path across quantile levels. Around
//! the estimator sit model selection ([`calibrate`]), recursive Monte Carlo
//! scenarios ([`scenario`]) and rolling-origin evaluation ([`evalharness`]).

pub mod calibrate;
pub mod data;
pub mod error;
pub mod evalharness;
pub mod lp;
pub mod mqr;
pub mod rng;
pub mod rolling;
pub mod scenario;

pub use calibrate::{grid_search, probability_mae, sic, CalibrationReport, Metric, ThetaGrid};
pub use data::{build_lag_matrix, DesignMatrix, NormStats, QuantileGrid, TimeSeries};
pub use error::{Error, Result, Stage};
pub use evalharness::{Ar1StudyConfig, BacktestConfig};
pub use lp::{LpSolution, LpStatus, SolverOptions, StandardLp};
pub use mqr::{estimate, predict_fan, MqrModel, QuantileFan, RegPair};
pub use scenario::{ContinuousQF, ScenarioSet, SimConfig};
