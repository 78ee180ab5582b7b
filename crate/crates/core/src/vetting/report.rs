use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::finding::Finding;
use crate::ir::validate_program;
use crate::manifest::{validate_manifest, ResourceId};
use crate::pipeline::AppPackage;

use super::rules::RuleAutomaton;
use super::taint::{all_sinks, location_sources, taint_analysis, Sink};
use super::temporal::check_temporal_rule;
use super::usage::check_manifest_consistency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticReport {
    pub app_id: String,
    pub findings: Vec<Finding>,
    pub verdict: Verdict,
}

pub fn verdict_of(findings: &[Finding]) -> Verdict {
    if findings.iter().any(Finding::is_reject) {
        Verdict::Reject
    } else {
        Verdict::Pass
    }
}

impl StaticReport {
    pub fn new(app_id: String, mut findings: Vec<Finding>) -> Self {
        findings.sort();
        findings.dedup();
        let verdict = verdict_of(&findings);
        StaticReport {
            app_id,
            findings,
            verdict,
        }
    }

    /// Line-oriented rendering, stable across runs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "static report: {}", self.app_id);
        let _ = writeln!(
            out,
            "verdict: {}",
            match self.verdict {
                Verdict::Pass => "pass",
                Verdict::Reject => "reject",
            }
        );
        for f in &self.findings {
            let _ = writeln!(out, "{} {} at {}: {}", f.severity, f.rule, f.path, f.evidence);
            if !f.witness.is_empty() {
                let _ = writeln!(out, "  witness: {}", f.witness.join(" -> "));
            }
        }
        out
    }
}

/// Runs every static check on a package. Unparseable manifests or programs
/// become reject findings rather than errors.
pub fn run_static_vetting(pkg: &AppPackage, rules: &[RuleAutomaton]) -> StaticReport {
    let app = match pkg.load() {
        Ok(app) => app,
        Err(message) => {
            return StaticReport::new(
                String::new(),
                vec![Finding::reject("package_parse", "package", message)],
            )
        }
    };
    let p = &*app.program;
    let m = &app.manifest;
    let mut findings = validate_manifest(m);
    findings.extend(validate_program(p));
    findings.extend(check_manifest_consistency(p, m));

    let network_declared = m.resources.iter().any(|r| r.resource == ResourceId::Network);
    for flow in taint_analysis(p, &location_sources(), &all_sinks()) {
        let evidence = format!("{} flows to {}", flow.source, flow.sink);
        let f = match flow.sink {
            Sink::NetSend(_) if !network_declared => {
                Finding::reject("location_to_undeclared_host", &flow.location, evidence)
            }
            _ => Finding::warn("location_flow", &flow.location, evidence),
        };
        findings.push(f.with_witness(flow.witness_path));
    }
    for r in rules {
        findings.extend(check_temporal_rule(p, r));
    }
    StaticReport::new(m.app_id.clone(), findings)
}
