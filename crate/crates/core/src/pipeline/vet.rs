//! Static then dynamic vetting of one package, and scenario files for
//! single-episode replay.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::package::{AppPackage, PackageError};
use crate::eval::{run_dynamic_vetting, DynamicConfig, DynamicError, DynamicReport, TraceRecord};
use crate::sim::bus::SignalState;
use crate::sim::road::{parse_path_csv, Polyline};
use crate::sim::{EpisodeConfig, Scenario, ScenarioParams};
use crate::vetting::{run_static_vetting, RuleAutomaton, StaticReport, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalVerdict {
    Approved,
    RejectedStatic,
    RejectedDynamic,
}

impl FinalVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalVerdict::Approved => "approved",
            FinalVerdict::RejectedStatic => "rejected_static",
            FinalVerdict::RejectedDynamic => "rejected_dynamic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VetReport {
    #[serde(rename = "static")]
    pub static_report: StaticReport,
    pub dynamic: Option<DynamicReport>,
    pub final_verdict: FinalVerdict,
}

impl VetReport {
    pub fn render(&self) -> String {
        let mut out = self.static_report.render();
        if let Some(d) = &self.dynamic {
            out.push_str(&d.render());
        }
        let _ = writeln!(out, "final verdict: {}", self.final_verdict.as_str());
        out
    }
}

#[derive(Debug, Error)]
pub enum VetError {
    #[error(transparent)]
    PackageUnreadable(#[from] PackageError),
    #[error("dynamic vetting: {0}")]
    Dynamic(#[from] DynamicError),
}

/// Static vetting, then dynamic vetting only if the static verdict is pass.
pub fn vet_loaded(
    pkg: &AppPackage,
    rules: &[RuleAutomaton],
    traces: &[TraceRecord],
    cfg: &DynamicConfig,
) -> Result<VetReport, VetError> {
    let static_report = run_static_vetting(pkg, rules);
    if static_report.verdict == Verdict::Reject {
        return Ok(VetReport {
            static_report,
            dynamic: None,
            final_verdict: FinalVerdict::RejectedStatic,
        });
    }
    let dynamic = run_dynamic_vetting(pkg, traces, cfg)?;
    let final_verdict = match dynamic.verdict {
        Verdict::Pass => FinalVerdict::Approved,
        Verdict::Reject => FinalVerdict::RejectedDynamic,
    };
    Ok(VetReport {
        static_report,
        dynamic: Some(dynamic),
        final_verdict,
    })
}

pub fn vet_package(
    path: &Path,
    rules: &[RuleAutomaton],
    traces: &[TraceRecord],
    cfg: &DynamicConfig,
) -> Result<VetReport, VetError> {
    vet_loaded(&AppPackage::read_dir(path)?, rules, traces, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    CarFollowing,
    Path,
}

/// Single-episode scenario read from TOML.
///
/// ```toml
/// kind = "car_following"
/// initial_gap = 30.0
/// ego_speed = 28.0
/// lead_speed = 28.0
/// lead_decel = 6.0
/// decel_onset = 2.0
/// ```
///
/// Path scenarios set `kind = "path"`, `ego_speed`, and optionally `path`
/// (a waypoint CSV relative to the scenario file); without it the app's
/// first route table is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub kind: ScenarioKind,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub max_steps: usize,
    pub ego_speed: f64,
    pub initial_gap: Option<f64>,
    pub lead_speed: Option<f64>,
    pub lead_decel: Option<f64>,
    pub decel_onset: Option<f64>,
    pub path: Option<String>,
    #[serde(default)]
    pub signals: Vec<(f64, SignalState)>,
}

fn default_dt() -> f64 {
    0.05
}

fn default_steps() -> usize {
    600
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Builds the episode for `pkg`; `base` resolves a relative `path`.
    pub fn episode(&self, pkg: &AppPackage, base: &Path) -> Result<EpisodeConfig, String> {
        let app = pkg.load()?;
        let scenario = match self.kind {
            ScenarioKind::CarFollowing => {
                let need = |v: Option<f64>, name: &str| v.ok_or(format!("car_following scenario needs {name}"));
                Scenario::car_following(&ScenarioParams {
                    initial_gap: need(self.initial_gap, "initial_gap")?,
                    ego_speed: self.ego_speed,
                    lead_speed: need(self.lead_speed, "lead_speed")?,
                    lead_decel: need(self.lead_decel, "lead_decel")?,
                    decel_onset: need(self.decel_onset, "decel_onset")?,
                })
            }
            ScenarioKind::Path => {
                let points = match &self.path {
                    Some(p) => {
                        let text = std::fs::read_to_string(base.join(p)).map_err(|e| format!("{p}: {e}"))?;
                        parse_path_csv(&text).map_err(|e| e.to_string())?
                    }
                    None => app
                        .program
                        .tables
                        .first()
                        .map(|t| t.rows.clone())
                        .ok_or("path scenario without `path` needs an app with a route table")?,
                };
                Scenario::path_following(Polyline::new(points).map_err(|e| e.to_string())?, self.ego_speed)
            }
        }
        .with_signals(self.signals.clone());
        let mut cfg = EpisodeConfig::new(scenario, vec![app.program.clone()]);
        cfg.dt = self.dt;
        cfg.max_steps = self.max_steps;
        Ok(cfg)
    }
}
