use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Reject,
    Warn,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Reject => "reject",
            Severity::Warn => "warn",
        })
    }
}

/// A single vetting observation. Analyses return lists of these rather than
/// failing on the first problem.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Finding {
    /// Where the problem is: a manifest field path, `handler/block`, etc.
    pub path: String,
    pub rule: String,
    pub severity: Severity,
    pub evidence: String,
    /// Event sequence or block path demonstrating the problem, when one exists.
    pub witness: Vec<String>,
}

impl Finding {
    pub fn reject(rule: &str, path: impl Into<String>, evidence: impl Into<String>) -> Self {
        Finding {
            path: path.into(),
            rule: rule.to_string(),
            severity: Severity::Reject,
            evidence: evidence.into(),
            witness: Vec::new(),
        }
    }

    pub fn warn(rule: &str, path: impl Into<String>, evidence: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Warn,
            ..Finding::reject(rule, path, evidence)
        }
    }

    pub fn with_witness(mut self, witness: Vec<String>) -> Self {
        self.witness = witness;
        self
    }

    pub fn is_reject(&self) -> bool {
        self.severity == Severity::Reject
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} at {}: {}", self.severity, self.rule, self.path, self.evidence)?;
        if !self.witness.is_empty() {
            write!(f, " [witness: {}]", self.witness.join(" -> "))?;
        }
        Ok(())
    }
}
