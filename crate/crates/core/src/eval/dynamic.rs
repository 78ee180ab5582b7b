//! Trace-driven dynamic vetting: crash indicators built from episodes and
//! the fit → search → estimate pipeline that produces a verdict.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ce::{cross_entropy_search, CeConfig};
use super::estimate::{acceleration_factor, is_estimate, mix_seed, Acceleration, Estimate, EvalError, Indicator, Outcome};
use super::model::ScenarioModel;
use super::traces::{fit_model, FitConfig, FitError, TraceRecord};
use crate::ir::AppProgram;
use crate::manifest::CircumstanceTag;
use crate::pipeline::AppPackage;
use crate::sim::bus::MessageKind;
use crate::sim::road::{Polyline, LANE_HALF_WIDTH};
use crate::sim::{run_episode, EpisodeConfig, Scenario, ScenarioParams};
use crate::vetting::Verdict;
use crate::watchdog::WatchdogConfig;

/// Crash indicator over the five car-following parameters on a straight
/// road. Severity is the minimum gap reached.
#[derive(Debug, Clone)]
pub struct CarFollowingIndicator {
    pub apps: Vec<Arc<AppProgram>>,
    pub watchdog: Option<WatchdogConfig>,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

impl CarFollowingIndicator {
    pub fn new(apps: Vec<Arc<AppProgram>>) -> Self {
        CarFollowingIndicator {
            apps,
            watchdog: None,
            dt: 0.05,
            horizon: 30.0,
            seed: 0,
        }
    }

    pub fn episode(&self, p: &ScenarioParams, draw: u64) -> EpisodeConfig {
        let mut cfg = EpisodeConfig::new(Scenario::car_following(p), self.apps.clone());
        cfg.dt = self.dt;
        cfg.max_steps = (self.horizon / self.dt).ceil() as usize;
        cfg.watchdog = self.watchdog;
        cfg.seed = mix_seed(self.seed, 2, draw);
        cfg
    }
}

impl Indicator for CarFollowingIndicator {
    fn evaluate(&self, x: &[f64], draw: u64) -> Outcome {
        let r = run_episode(&self.episode(&ScenarioParams::from_slice(x), draw))
            .expect("car-following episode config is valid");
        Outcome {
            hit: r.crashed,
            severity: if r.crashed { r.min_gap.min(0.0) } else { r.min_gap },
        }
    }
}

/// Crash indicator over the entry speed on a fixed path. Severity is the
/// lane half-width minus the largest cross-track error.
#[derive(Debug, Clone)]
pub struct PathIndicator {
    pub apps: Vec<Arc<AppProgram>>,
    pub path: Polyline,
    pub dt: f64,
    pub seed: u64,
}

impl PathIndicator {
    pub fn episode(&self, speed: f64, draw: u64) -> EpisodeConfig {
        let mut cfg = EpisodeConfig::new(
            Scenario::path_following(self.path.clone(), speed),
            self.apps.clone(),
        );
        cfg.dt = self.dt;
        let travel = self.path.length() / speed.max(1.0) + 20.0;
        cfg.max_steps = ((travel / self.dt).ceil() as usize).min(20_000);
        cfg.seed = mix_seed(self.seed, 2, draw);
        cfg
    }
}

impl Indicator for PathIndicator {
    fn evaluate(&self, x: &[f64], draw: u64) -> Outcome {
        let r = run_episode(&self.episode(x[0], draw)).expect("path episode config is valid");
        let margin = LANE_HALF_WIDTH - r.max_cross_track;
        Outcome {
            hit: r.crashed,
            severity: if r.crashed { margin.min(0.0) } else { margin.max(f64::MIN_POSITIVE) },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicConfig {
    /// Reject when the 95% upper confidence bound exceeds this.
    pub threshold: f64,
    pub ce: CeConfig,
    pub n_is: usize,
    pub target_rel_err: f64,
    pub seed: u64,
    pub fit: FitConfig,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig {
            threshold: 1e-4,
            ce: CeConfig {
                iters: 8,
                n_per_iter: 1000,
                ..CeConfig::default()
            },
            n_is: 2000,
            target_rel_err: 0.1,
            seed: 0,
            fit: FitConfig::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DynamicError {
    #[error("no traces match circumstances {0:?}")]
    NoMatchingTraces(Vec<String>),
    #[error("package: {0}")]
    Package(String),
    #[error("model fit: {0}")]
    Fit(#[from] FitError),
    #[error("estimation: {0}")]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioFamily {
    CarFollowing,
    PathFollowing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicReport {
    pub app_id: String,
    pub family: ScenarioFamily,
    pub circumstances: Vec<String>,
    pub n_traces: usize,
    pub nominal: ScenarioModel,
    pub proposal: ScenarioModel,
    pub ce_levels: Vec<f64>,
    pub ce_warning: bool,
    pub estimate: Estimate,
    pub acceleration: Option<Acceleration>,
    pub threshold: f64,
    pub verdict: Verdict,
    pub workers: usize,
}

impl DynamicReport {
    pub fn render(&self) -> String {
        let e = &self.estimate;
        let mut out = String::new();
        let _ = writeln!(out, "dynamic report: {}", self.app_id);
        let _ = writeln!(
            out,
            "family: {:?}; circumstances: {}; traces: {}",
            self.family,
            self.circumstances.join(","),
            self.n_traces
        );
        let _ = writeln!(out, "nominal: {}", model_line(&self.nominal));
        let _ = writeln!(out, "proposal: {}", model_line(&self.proposal));
        let levels: Vec<String> = self.ce_levels.iter().map(|l| format!("{l:.4}")).collect();
        let _ = writeln!(out, "ce levels: {}", levels.join(" "));
        if self.ce_warning {
            let _ = writeln!(out, "warning: proposal search stalled above the crash level");
        }
        let _ = writeln!(out, "hits: {} of {}; workers: {}", e.hits, e.n, self.workers);
        let _ = writeln!(out, "[summary]");
        let _ = writeln!(out, "p_hat={:.6e}", e.p_hat);
        let _ = writeln!(out, "ci_lo={:.6e}", e.ci95.0);
        let _ = writeln!(out, "ci_hi={:.6e}", e.ci95.1);
        let _ = writeln!(out, "n={}", e.n);
        match &self.acceleration {
            Some(a) => {
                let _ = writeln!(out, "acceleration_factor={:.3}", a.factor);
            }
            None => {
                let _ = writeln!(out, "acceleration_factor=n/a");
            }
        }
        let _ = writeln!(out, "threshold={:.6e}", self.threshold);
        let _ = writeln!(
            out,
            "verdict={}",
            if self.verdict == Verdict::Pass { "pass" } else { "reject" }
        );
        out
    }
}

fn model_line(m: &ScenarioModel) -> String {
    use super::model::Marginal::*;
    m.dims
        .iter()
        .map(|(n, d)| match d {
            TruncNormal { mu, sigma, .. } => format!("{n}~N({mu:.3},{sigma:.3})"),
            TruncExp { rate, .. } => format!("{n}~Exp({rate:.4})"),
            Uniform { lo, hi } => format!("{n}~U({lo},{hi})"),
            Discrete { values, .. } => format!("{n}~D[{}]", values.len()),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Records usable for a package with the given circumstance tags.
pub fn matching_traces<'a>(tags: &[CircumstanceTag], records: &'a [TraceRecord]) -> Vec<&'a TraceRecord> {
    if tags.contains(&CircumstanceTag::Any) {
        return records.iter().collect();
    }
    records
        .iter()
        .filter(|r| tags.iter().any(|t| t.to_string() == r.circumstance))
        .collect()
}

/// The path an app follows, when it is a path app: it stores a route table
/// and ignores lead-vehicle reports.
pub fn app_path(p: &AppProgram) -> Option<Polyline> {
    if p.handlers.iter().any(|h| h.trigger == MessageKind::LeadVehicleReport) {
        return None;
    }
    p.tables.first().and_then(|t| Polyline::new(t.rows.clone()).ok())
}

pub fn run_dynamic_vetting(
    pkg: &AppPackage,
    traces: &[TraceRecord],
    cfg: &DynamicConfig,
) -> Result<DynamicReport, DynamicError> {
    let app = pkg.load().map_err(DynamicError::Package)?;
    let tags = &app.manifest.allowable_circumstances;
    let subset: Vec<TraceRecord> = matching_traces(tags, traces).into_iter().cloned().collect();
    let tag_names: Vec<String> = tags.iter().map(|t| t.to_string()).collect();
    if subset.is_empty() {
        return Err(DynamicError::NoMatchingTraces(tag_names));
    }
    let full = fit_model(&subset, &cfg.fit)?;
    let apps = vec![app.program.clone()];

    let (family, nominal, ind): (_, _, Box<dyn Indicator>) = match app_path(&app.program) {
        Some(path) => (
            ScenarioFamily::PathFollowing,
            full.project(&["ego_speed"]).map_err(EvalError::from)?,
            Box::new(PathIndicator { apps, path, dt: 0.05, seed: cfg.seed }),
        ),
        None => {
            let mut ind = CarFollowingIndicator::new(apps);
            ind.seed = cfg.seed;
            (ScenarioFamily::CarFollowing, full, Box::new(ind))
        }
    };
    let ce = cross_entropy_search(ind.as_ref(), &nominal, &cfg.ce, cfg.seed)?;
    let estimate = is_estimate(ind.as_ref(), &nominal, &ce.proposal, cfg.n_is, cfg.seed)?;
    let acceleration = acceleration_factor(&estimate, cfg.target_rel_err).ok();
    let verdict = if estimate.ci95.1 > cfg.threshold { Verdict::Reject } else { Verdict::Pass };
    Ok(DynamicReport {
        app_id: app.manifest.app_id.clone(),
        family,
        circumstances: tag_names,
        n_traces: subset.len(),
        nominal,
        proposal: ce.proposal,
        ce_levels: ce.levels,
        ce_warning: ce.no_elite_progress,
        estimate,
        acceleration,
        threshold: cfg.threshold,
        verdict,
        workers: rayon::current_num_threads(),
    })
}
