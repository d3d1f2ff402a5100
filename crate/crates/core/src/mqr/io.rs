//! Plain-text model files.
//!
//! ```text
//! mqrlr-model 1
//! label MQR-LR
//! lambda 20
//! gamma 1
//! objective 412.0571
//! alphas 0.05 0.1 ... 0.95
//! covariates lag_1 lag_2
//! means 0.01 0.02
//! sds 1.04 1.05
//! intercepts <|J| values>
//! coef lag_1 <|J| values>
//! weight lag_1 <|J| values>
//! ```
//!
//! One `coef` and one `weight` line per covariate, in `covariates` order.
//! Floats use Rust's shortest round-trip formatting, so a save/load cycle is
//! bit-exact. Coefficients are on the standardized covariate scale.

use std::fs;
use std::path::Path;

use super::{MqrModel, RegPair};
use crate::data::{NormStats, QuantileGrid};
use crate::error::{Error, Result};

const MAGIC: &str = "mqrlr-model 1";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

impl MqrModel {
    pub fn to_text(&self) -> Result<String> {
        if let Some(l) = self.covariate_labels.iter().find(|l| l.is_empty() || l.contains(char::is_whitespace)) {
            return Err(Error::InvalidInput(format!("covariate label `{l}` cannot be written (whitespace)")));
        }
        let mut out = String::new();
        let mut line = |s: String| {
            out.push_str(s.trim_end());
            out.push('\n');
        };
        line(MAGIC.to_string());
        line(format!("label {}", self.label()));
        line(format!("lambda {}", self.theta.lambda));
        line(format!("gamma {}", self.theta.gamma));
        line(format!("objective {}", self.objective));
        line(format!("alphas {}", join(self.grid.alphas())));
        line(format!("covariates {}", self.covariate_labels.join(" ")));
        line(format!("means {}", join(&self.norm_stats.means)));
        line(format!("sds {}", join(&self.norm_stats.sds)));
        line(format!("intercepts {}", join(&self.intercepts)));
        for (label, c) in self.covariate_labels.iter().zip(&self.coefs) {
            line(format!("coef {label} {}", join(c)));
        }
        for (label, w) in self.covariate_labels.iter().zip(&self.weights) {
            line(format!("weight {label} {}", join(w)));
        }
        Ok(out)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidInput(format!("model file: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(MAGIC) {
            return Err(bad(format!("missing `{MAGIC}` header")));
        }
        let mut fields: Vec<(String, Vec<String>)> = Vec::new();
        for l in lines {
            let mut parts = l.split_whitespace().map(str::to_string);
            let key = parts.next().unwrap();
            fields.push((key, parts.collect()));
        }
        let get = |key: &str| -> Result<&Vec<String>> {
            fields.iter().find(|(k, _)| k == key).map(|(_, v)| v).ok_or_else(|| bad(format!("missing `{key}`")))
        };
        let floats = |vals: &[String]| -> Result<Vec<f64>> {
            vals.iter().map(|v| v.parse::<f64>().map_err(|_| bad(format!("`{v}` is not a number")))).collect()
        };
        let scalar = |key: &str| -> Result<f64> {
            let v = floats(get(key)?)?;
            if v.len() != 1 {
                return Err(bad(format!("`{key}` expects one value")));
            }
            Ok(v[0])
        };

        let theta = RegPair::new(scalar("lambda")?, scalar("gamma")?)?;
        let objective = scalar("objective")?;
        let grid = QuantileGrid::new(floats(get("alphas")?)?)?;
        let labels = get("covariates")?.clone();
        let norm_stats = NormStats::new(floats(get("means")?)?, floats(get("sds")?)?)?;
        if norm_stats.dim() != labels.len() {
            return Err(bad("normalization statistics do not match the covariates".into()));
        }
        let intercepts = floats(get("intercepts")?)?;
        if intercepts.len() != grid.len() {
            return Err(bad("intercept count differs from grid length".into()));
        }
        let per_covariate = |kind: &str| -> Result<Vec<Vec<f64>>> {
            labels
                .iter()
                .map(|label| {
                    let (_, vals) = fields
                        .iter()
                        .find(|(k, v)| k == kind && v.first() == Some(label))
                        .ok_or_else(|| bad(format!("missing `{kind} {label}`")))?;
                    let row = floats(&vals[1..])?;
                    if row.len() != grid.len() {
                        return Err(bad(format!("`{kind} {label}` has {} values", row.len())));
                    }
                    Ok(row)
                })
                .collect()
        };
        let coefs = per_covariate("coef")?;
        let weights = per_covariate("weight")?;
        Ok(MqrModel { grid, intercepts, coefs, norm_stats, theta, covariate_labels: labels, weights, objective })
    }
}

pub fn write_model(path: &Path, model: &MqrModel) -> Result<()> {
    fs::write(path, model.to_text()?)?;
    Ok(())
}

pub fn read_model(path: &Path) -> Result<MqrModel> {
    let text = fs::read_to_string(path)?;
    MqrModel::from_text(&text).map_err(|e| Error::InputFormat { path: path.to_path_buf(), msg: e.to_string() })
}

/// `alpha,covariate,value` rows, intercepts first (covariate `intercept`),
/// on the standardized scale.
pub fn write_coefficients_csv(path: &Path, model: &MqrModel) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["alpha", "covariate", "value"])?;
    for (j, a) in model.grid.alphas().iter().enumerate() {
        w.write_record([a.to_string(), "intercept".into(), model.intercepts[j].to_string()])?;
    }
    for (label, c) in model.covariate_labels.iter().zip(&model.coefs) {
        for (a, v) in model.grid.alphas().iter().zip(c) {
            w.write_record([a.to_string(), label.clone(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
