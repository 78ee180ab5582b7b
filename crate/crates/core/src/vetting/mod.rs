//! Offline checks run before an app enters the market: manifest/code
//! consistency, privacy taint flows, and temporal vehicle rules.

pub mod report;
pub mod rules;
pub mod taint;
pub mod temporal;
pub mod usage;

pub use report::{run_static_vetting, verdict_of, StaticReport, Verdict};
pub use rules::{builtin_rules, parse_rule, RuleAutomaton};
pub use taint::{taint_analysis, Sink, SinkKind, TaintFlow};
pub use temporal::check_temporal_rule;
pub use usage::{check_manifest_consistency, collect_resource_usage, ResourceUsage};
