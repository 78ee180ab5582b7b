//! Naturalistic trace records: CSV I/O, a synthetic generator, and model
//! fitting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::estimate::draw_uniforms;
use super::model::{Marginal, ModelError, ScenarioModel};
use crate::sim::ScenarioParams;

pub const TRACE_HEADER: [&str; 6] =
    ["circumstance", "initial_gap", "ego_speed", "lead_speed", "lead_decel", "decel_onset"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub circumstance: String,
    pub initial_gap: f64,
    pub ego_speed: f64,
    pub lead_speed: f64,
    pub lead_decel: f64,
    pub decel_onset: f64,
}

impl TraceRecord {
    pub fn params(&self) -> ScenarioParams {
        ScenarioParams {
            initial_gap: self.initial_gap,
            ego_speed: self.ego_speed,
            lead_speed: self.lead_speed,
            lead_decel: self.lead_decel,
            decel_onset: self.decel_onset,
        }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace csv header must be {expected}, found {found}")]
    BadHeader { expected: String, found: String },
}

pub fn read_traces(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != TRACE_HEADER {
        return Err(TraceError::BadHeader {
            expected: TRACE_HEADER.join(","),
            found: found.join(","),
        });
    }
    r.deserialize().collect::<Result<_, _>>().map_err(TraceError::from)
}

pub fn write_traces(records: &[TraceRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.circumstance.clone(),
            format!("{:.4}", r.initial_gap),
            format!("{:.4}", r.ego_speed),
            format!("{:.4}", r.lead_speed),
            format!("{:.4}", r.lead_decel),
            format!("{:.4}", r.decel_onset),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Ground-truth generator for one circumstance tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircumstanceModel {
    pub tag: String,
    /// Relative share of records carrying this tag.
    pub weight: f64,
    pub initial_gap: Marginal,
    pub ego_speed: Marginal,
    pub lead_speed: Marginal,
    pub lead_decel: Marginal,
    pub decel_onset: Marginal,
}

impl CircumstanceModel {
    pub fn model(&self) -> Result<ScenarioModel, ModelError> {
        ScenarioModel::new(
            ScenarioParams::DIMENSIONS
                .iter()
                .zip([
                    &self.initial_gap,
                    &self.ego_speed,
                    &self.lead_speed,
                    &self.lead_decel,
                    &self.decel_onset,
                ])
                .map(|(n, m)| (n.to_string(), m.clone()))
                .collect(),
        )
    }
}

/// Trace generator configuration, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceModelConfig {
    #[serde(default)]
    pub seed: u64,
    pub circumstance: Vec<CircumstanceModel>,
}

pub fn generate_traces(cfg: &TraceModelConfig, n: usize, seed: u64) -> Result<Vec<TraceRecord>, ModelError> {
    let models: Vec<ScenarioModel> = cfg
        .circumstance
        .iter()
        .map(CircumstanceModel::model)
        .collect::<Result<_, _>>()?;
    let total: f64 = cfg.circumstance.iter().map(|c| c.weight).sum();
    Ok((0..n as u64)
        .map(|i| {
            let u = draw_uniforms(seed, u64::MAX, i, 6);
            let mut acc = 0.0;
            let mut pick = cfg.circumstance.len() - 1;
            for (j, c) in cfg.circumstance.iter().enumerate() {
                acc += c.weight / total;
                if u[0] < acc {
                    pick = j;
                    break;
                }
            }
            let x = models[pick].transform(&u[1..]);
            TraceRecord {
                circumstance: cfg.circumstance[pick].tag.clone(),
                initial_gap: x[0],
                ego_speed: x[1],
                lead_speed: x[2],
                lead_decel: x[3],
                decel_onset: x[4],
            }
        })
        .collect())
}

/// Truncation bounds applied to fitted models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub gap: (f64, f64),
    pub speed: (f64, f64),
    pub decel_max: f64,
    pub onset_max: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            gap: (5.0, 150.0),
            speed: (0.5, 45.0),
            decel_max: 12.0,
            onset_max: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("need at least {min} records, got {got}")]
    InsufficientData { min: usize, got: usize },
    #[error("field {0} has zero variance")]
    DegenerateVariance(String),
    #[error("record {index}: {field} = {value} outside its physical bounds")]
    OutOfBounds { index: usize, field: String, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub const MIN_FIT_RECORDS: usize = 30;

/// Mean and maximum-likelihood standard deviation (divisor n).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Fits the car-following model. Normal fields use the sample mean and
/// standard deviation without truncation correction; the deceleration
/// rate is 1/mean; onset is uniform on `(0, onset_max]`.
pub fn fit_model(records: &[TraceRecord], cfg: &FitConfig) -> Result<ScenarioModel, FitError> {
    if records.len() < MIN_FIT_RECORDS {
        return Err(FitError::InsufficientData {
            min: MIN_FIT_RECORDS,
            got: records.len(),
        });
    }
    let bounds = [cfg.gap, cfg.speed, cfg.speed, (0.0, cfg.decel_max), (0.0, cfg.onset_max)];
    let cols: Vec<Vec<f64>> = (0..5)
        .map(|d| records.iter().map(|r| r.params().to_vec()[d]).collect())
        .collect();
    for (d, col) in cols.iter().enumerate() {
        for (index, v) in col.iter().enumerate() {
            if !(v.is_finite() && *v > 0.0 && *v <= bounds[d].1) {
                return Err(FitError::OutOfBounds {
                    index,
                    field: ScenarioParams::DIMENSIONS[d].to_string(),
                    value: *v,
                });
            }
        }
    }
    let mut dims = Vec::new();
    for d in 0..3 {
        let name = ScenarioParams::DIMENSIONS[d];
        let (mu, sigma) = mean_std(&cols[d]);
        if sigma == 0.0 {
            return Err(FitError::DegenerateVariance(name.to_string()));
        }
        dims.push((
            name.to_string(),
            Marginal::TruncNormal { mu, sigma, lo: bounds[d].0, hi: bounds[d].1 },
        ));
    }
    let (decel_mean, decel_sd) = mean_std(&cols[3]);
    if decel_sd == 0.0 {
        return Err(FitError::DegenerateVariance("lead_decel".into()));
    }
    dims.push((
        "lead_decel".into(),
        Marginal::TruncExp { rate: 1.0 / decel_mean, lo: 0.0, hi: cfg.decel_max },
    ));
    dims.push(("decel_onset".into(), Marginal::Uniform { lo: 0.0, hi: cfg.onset_max }));
    Ok(ScenarioModel::new(dims)?)
}

/// Records grouped by circumstance tag.
pub fn by_circumstance(records: &[TraceRecord]) -> BTreeMap<&str, Vec<&TraceRecord>> {
    let mut out: BTreeMap<&str, Vec<&TraceRecord>> = BTreeMap::new();
    for r in records {
        out.entry(r.circumstance.as_str()).or_default().push(r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(gap: f64) -> TraceRecord {
        TraceRecord {
            circumstance: "highway".into(),
            initial_gap: gap,
            ego_speed: 28.0,
            lead_speed: 27.0,
            lead_decel: 1.0,
            decel_onset: 3.0,
        }
    }

    #[test]
    fn too_few_and_degenerate() {
        let few: Vec<_> = (0..29).map(|i| rec(20.0 + i as f64)).collect();
        assert_eq!(
            fit_model(&few, &FitConfig::default()),
            Err(FitError::InsufficientData { min: 30, got: 29 })
        );
        let flat: Vec<_> = (0..40).map(|_| rec(30.0)).collect();
        assert_eq!(
            fit_model(&flat, &FitConfig::default()),
            Err(FitError::DegenerateVariance("initial_gap".into()))
        );
    }

    #[test]
    fn csv_roundtrip() {
        let rs = vec![rec(12.5), rec(40.25)];
        let text = write_traces(&rs);
        assert!(text.starts_with("circumstance,initial_gap,ego_speed,lead_speed,lead_decel,decel_onset\n"));
        assert_eq!(read_traces(&text).unwrap(), rs);
        assert!(matches!(read_traces("a,b\n1,2\n"), Err(TraceError::BadHeader { .. })));
    }

    #[test]
    fn out_of_bounds_record() {
        let mut rs: Vec<_> = (0..40).map(|i| rec(20.0 + i as f64)).collect();
        rs[7].lead_decel = 13.0;
        assert!(matches!(
            fit_model(&rs, &FitConfig::default()),
            Err(FitError::OutOfBounds { index: 7, .. })
        ));
    }
}
