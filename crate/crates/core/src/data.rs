//! Observed series, quantile grids, lagged design matrices and covariate
//! standardization.

use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};

use crate::error::{Error, Result};

/// Check (pinball) loss `ρ_α(u)`.
pub fn pinball(alpha: f64, u: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(pinball_unchecked(alpha, u))
}

#[inline]
pub(crate) fn pinball_unchecked(alpha: f64, u: f64) -> f64 {
    if u >= 0.0 {
        alpha * u
    } else {
        (alpha - 1.0) * u
    }
}

/// Ordered observations of the target variable.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    values: Vec<f64>,
    timestamps: Option<Vec<String>>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::with_timestamps(values, None)
    }

    pub fn with_timestamps(values: Vec<f64>, timestamps: Option<Vec<String>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("time series must hold at least one value".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at position {i}")));
        }
        if let Some(ts) = &timestamps {
            if ts.len() != values.len() {
                return Err(Error::DimensionMismatch { expected: values.len(), got: ts.len() });
            }
            let parsed = ts
                .iter()
                .map(|s| parse_timestamp(s).ok_or_else(|| Error::InvalidInput(format!("unparseable timestamp `{s}`"))))
                .collect::<Result<Vec<_>>>()?;
            if let Some(w) = parsed.windows(2).position(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput(format!(
                    "timestamps not strictly increasing at `{}`",
                    ts[w + 1]
                )));
            }
        }
        Ok(Self { values, timestamps })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamps(&self) -> Option<&[String]> {
        self.timestamps.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Observations `[start, end)`; timestamps follow along.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.values.len() {
            return Err(Error::InvalidInput(format!(
                "slice [{start}, {end}) out of range for length {}",
                self.values.len()
            )));
        }
        Ok(Self {
            values: self.values[start..end].to_vec(),
            timestamps: self.timestamps.as_ref().map(|t| t[start..end].to_vec()),
        })
    }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d").ok().and_then(|d| d.and_hms_opt(0, 0, 0))
}

/// Strictly increasing probability levels inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileGrid {
    alphas: Vec<f64>,
}

impl QuantileGrid {
    /// Requires at least three levels so the interior second-difference set
    /// is non-empty.
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "quantile grid needs at least 3 levels, got {}",
                alphas.len()
            )));
        }
        Self::new_unchecked_len(alphas)
    }

    /// Same checks as [`QuantileGrid::new`] minus the length floor; used for
    /// fans built on short grids (tests, two-point interpolation).
    pub fn with_min_len(alphas: Vec<f64>, min_len: usize) -> Result<Self> {
        if alphas.len() < min_len.max(1) {
            return Err(Error::InvalidInput(format!(
                "quantile grid needs at least {min_len} levels, got {}",
                alphas.len()
            )));
        }
        Self::new_unchecked_len(alphas)
    }

    fn new_unchecked_len(alphas: Vec<f64>) -> Result<Self> {
        if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::Domain(format!("grid level {a} outside (0,1)")));
        }
        if alphas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("grid levels must be strictly increasing".into()));
        }
        Ok(Self { alphas })
    }

    /// α ∈ {0.05, 0.10, …, 0.95}.
    pub fn default_grid() -> Self {
        Self { alphas: (1..20).map(|k| k as f64 / 20.0).collect() }
    }

    /// `k/n` for `k = 1..n`.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidInput("uniform grid needs n >= 4".into()));
        }
        Self::new((1..n).map(|k| k as f64 / n as f64).collect())
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

/// Covariate rows `x_t` aligned with targets `y_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: Vec<Vec<f64>>,
    targets: Vec<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>, labels: Vec<String>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: rows.len(), got: targets.len() });
        }
        if let Some(r) = rows.iter().find(|r| r.len() != labels.len()) {
            return Err(Error::DimensionMismatch { expected: labels.len(), got: r.len() });
        }
        let finite = rows.iter().flatten().chain(targets.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("design matrix holds non-finite entries".into()));
        }
        Ok(Self { rows, targets, labels })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.labels.len()
    }

    pub fn column(&self, p: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[p]).collect()
    }

    /// Keeps the rows whose index satisfies `keep`.
    pub fn select_rows(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (i, (r, y)) in self.rows.iter().zip(&self.targets).enumerate() {
            if keep(i) {
                rows.push(r.clone());
                targets.push(*y);
            }
        }
        Self { rows, targets, labels: self.labels.clone() }
    }

    /// Appends extra covariate columns (e.g. exogenous regressors already
    /// aligned with the targets).
    pub fn with_columns(mut self, columns: &[(String, Vec<f64>)]) -> Result<Self> {
        for (name, col) in columns {
            if col.len() != self.rows.len() {
                return Err(Error::DimensionMismatch { expected: self.rows.len(), got: col.len() });
            }
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("column `{name}` holds non-finite entries")));
            }
            for (r, v) in self.rows.iter_mut().zip(col) {
                r.push(*v);
            }
            self.labels.push(name.clone());
        }
        Ok(self)
    }
}

/// Label used for the lag-`l` covariate.
pub fn lag_label(lag: usize) -> String {
    format!("lag_{lag}")
}

fn validate_lags(lags: &[usize]) -> Result<usize> {
    if lags.contains(&0) {
        return Err(Error::InvalidInput("lags must be positive".into()));
    }
    let mut sorted = lags.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidInput("lags must be distinct".into()));
    }
    Ok(sorted.last().copied().unwrap_or(0))
}

/// Rows `(y_{t-l})_{l ∈ lags}` with target `y_t` for every `t ≥ max(lags)`.
/// An empty lag set gives an intercept-only design over the whole series.
pub fn build_lag_matrix(series: &TimeSeries, lags: &[usize]) -> Result<DesignMatrix> {
    let max_lag = validate_lags(lags)?;
    let y = series.values();
    if y.len() <= max_lag {
        return Err(Error::InsufficientData(format!(
            "series of length {} too short for maximum lag {max_lag}",
            y.len()
        )));
    }
    let rows = (max_lag..y.len()).map(|t| lag_vector(y, t, lags)).collect();
    let targets = y[max_lag..].to_vec();
    let labels = lags.iter().map(|&l| lag_label(l)).collect();
    DesignMatrix::new(rows, targets, labels)
}

/// Covariates for predicting position `t` of `y` (needs `t ≥ max(lags)`).
pub(crate) fn lag_vector(y: &[f64], t: usize, lags: &[usize]) -> Vec<f64> {
    lags.iter().map(|&l| y[t - l]).collect()
}

/// Per-covariate mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl NormStats {
    pub fn new(means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if means.len() != sds.len() {
            return Err(Error::DimensionMismatch { expected: means.len(), got: sds.len() });
        }
        if sds.iter().any(|s| !(*s > 0.0 && s.is_finite())) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("normalization sds must be positive and finite".into()));
        }
        Ok(Self { means, sds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }
}

/// Standardizes each covariate column to mean 0 and sample sd 1 (n−1
/// denominator). Targets are left untouched.
pub fn normalize(m: &DesignMatrix) -> Result<(DesignMatrix, NormStats)> {
    let p = m.n_covariates();
    let n = m.n_rows();
    if p > 0 && n < 2 {
        return Err(Error::InsufficientData("normalization needs at least two rows".into()));
    }
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let col = m.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let sd = (ss / (n as f64 - 1.0)).sqrt();
        if sd.is_nan() || sd <= 1e-12 * (1.0 + mean.abs()) {
            return Err(Error::DegenerateCovariate(m.labels()[j].clone()));
        }
        means.push(mean);
        sds.push(sd);
    }
    let stats = NormStats { means, sds };
    let rows = m.rows().iter().map(|r| standardize(r, &stats)).collect();
    let out = DesignMatrix { rows, targets: m.targets().to_vec(), labels: m.labels().to_vec() };
    Ok((out, stats))
}

/// Maps a raw covariate vector with previously computed statistics.
pub fn apply_norm(x: &[f64], stats: &NormStats) -> Result<Vec<f64>> {
    if x.len() != stats.dim() {
        return Err(Error::DimensionMismatch { expected: stats.dim(), got: x.len() });
    }
    Ok(standardize(x, stats))
}

fn standardize(x: &[f64], stats: &NormStats) -> Vec<f64> {
    x.iter()
        .zip(stats.means.iter().zip(&stats.sds))
        .map(|(v, (m, s))| (v - m) / s)
        .collect()
}

/// A series read from CSV together with any additional numeric columns.
#[derive(Debug, Clone)]
pub struct SeriesFrame {
    pub series: TimeSeries,
    pub extra: Vec<(String, Vec<f64>)>,
}

/// Reads a CSV with a required `value` column and optional `timestamp`
/// column. Any other column is parsed as a numeric covariate.
pub fn read_series_csv(path: &Path) -> Result<SeriesFrame> {
    let fmt_err = |msg: String| Error::InputFormat { path: path.to_path_buf(), msg };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let value_idx = headers
        .iter()
        .position(|h| h == "value")
        .ok_or_else(|| fmt_err("missing required column `value`".into()))?;
    let ts_idx = headers.iter().position(|h| h == "timestamp");
    let extra_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != value_idx && Some(i) != ts_idx).collect();

    let mut values = Vec::new();
    let mut stamps = Vec::new();
    let mut extra: Vec<Vec<f64>> = vec![Vec::new(); extra_idx.len()];
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| fmt_err(format!("row {}: `{raw}` in column `{}` is not a number", line + 2, &headers[i])))
        };
        values.push(parse(value_idx)?);
        if let Some(i) = ts_idx {
            stamps.push(rec.get(i).unwrap_or("").to_string());
        }
        for (k, &i) in extra_idx.iter().enumerate() {
            extra[k].push(parse(i)?);
        }
    }
    if values.is_empty() {
        return Err(fmt_err("no observations".into()));
    }
    let series = TimeSeries::with_timestamps(values, ts_idx.map(|_| stamps)).map_err(|e| fmt_err(e.to_string()))?;
    let extra = extra_idx.iter().map(|&i| headers[i].to_string()).zip(extra).collect();
    Ok(SeriesFrame { series, extra })
}

/// Writes `timestamp,value` (or just `value`) with round-trip float formatting.
pub fn write_series_csv(path: &Path, series: &TimeSeries) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    match series.timestamps() {
        Some(ts) => {
            w.write_record(["timestamp", "value"])?;
            for (t, v) in ts.iter().zip(series.values()) {
                w.write_record([t.as_str(), &v.to_string()])?;
            }
        }
        None => {
            w.write_record(["value"])?;
            for v in series.values() {
                w.write_record([v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
