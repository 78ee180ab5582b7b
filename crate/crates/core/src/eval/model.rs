//! Scenario distributions: independent per-dimension marginals with
//! truncated support, log densities and inverse-CDF sampling.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

/// Upper tail of the standard normal, accurate far into the tail.
fn q(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn q_inv(p: f64) -> f64 {
    SQRT_2 * erfc_inv(2.0 * p)
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    q(-x)
}

/// Probability mass of the standard normal on `[a, b]`, computed in the
/// tail that keeps the subtraction well conditioned.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        q(a) - q(b)
    } else if b <= 0.0 {
        q(-b) - q(-a)
    } else {
        1.0 - q(-a) - q(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Marginal {
    /// Normal(mu, sigma) restricted to `[lo, hi]`; infinite bounds allowed.
    TruncNormal { mu: f64, sigma: f64, lo: f64, hi: f64 },
    /// Exponential on `(lo, hi]` with density proportional to
    /// `exp(-rate * (x - lo))`. A negative rate tilts mass toward `hi`.
    TruncExp { rate: f64, lo: f64, hi: f64 },
    /// Uniform on `(lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Finite atoms with probabilities summing to one.
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid marginal {name}: {reason}")]
    InvalidMarginal { name: String, reason: String },
    #[error("proposal support differs from nominal in dimension {0}")]
    SupportMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

impl Marginal {
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            Marginal::TruncNormal { lo, hi, .. }
            | Marginal::TruncExp { lo, hi, .. }
            | Marginal::Uniform { lo, hi } => (*lo, *hi),
            Marginal::Discrete { values, .. } => values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v))),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        let (lo, hi) = self.bounds();
        if !(lo < hi) && !matches!(self, Marginal::Discrete { .. }) {
            return Err(format!("empty support [{lo}, {hi}]"));
        }
        match self {
            Marginal::TruncNormal { mu, sigma, .. } => {
                if !(sigma.is_finite() && *sigma > 0.0 && mu.is_finite()) {
                    return Err(format!("need finite mu and sigma > 0, got ({mu}, {sigma})"));
                }
                if self.log_norm() == f64::NEG_INFINITY {
                    return Err("truncation interval has zero mass".into());
                }
            }
            Marginal::TruncExp { rate, lo, hi } => {
                if !rate.is_finite() || !lo.is_finite() || !hi.is_finite() {
                    return Err("exponential needs a finite rate and bounds".into());
                }
            }
            Marginal::Uniform { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err("uniform needs finite bounds".into());
                }
            }
            Marginal::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err("values and probs must be non-empty and of equal length".into());
                }
                if probs.iter().any(|p| !(*p >= 0.0)) {
                    return Err("negative probability".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(format!("probabilities sum to {total}"));
                }
            }
        }
        Ok(())
    }

    /// Log of the normalizing mass of the truncated family.
    fn log_norm(&self) -> f64 {
        match self {
            Marginal::TruncNormal { mu, sigma, lo, hi } => {
                normal_mass((lo - mu) / sigma, (hi - mu) / sigma).ln()
            }
            Marginal::TruncExp { rate, lo, hi } => exp_log_norm(*rate, hi - lo),
            Marginal::Uniform { lo, hi } => (hi - lo).ln(),
            Marginal::Discrete { .. } => 0.0,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds();
        if x.is_nan() || x < lo || x > hi {
            return f64::NEG_INFINITY;
        }
        match self {
            Marginal::TruncNormal { mu, sigma, .. } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() - self.log_norm()
            }
            Marginal::TruncExp { rate, lo, .. } => {
                if x == *lo {
                    return f64::NEG_INFINITY;
                }
                -rate * (x - lo) - self.log_norm()
            }
            Marginal::Uniform { lo, .. } => {
                if x == *lo {
                    return f64::NEG_INFINITY;
                }
                -self.log_norm()
            }
            Marginal::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(v, _)| **v == x)
                .map(|(_, p)| *p)
                .sum::<f64>()
                .ln(),
        }
    }

    /// Inverse CDF at `u` in (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            Marginal::TruncNormal { mu, sigma, lo, hi } => {
                let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
                let z = if a >= 0.0 {
                    q_inv(q(a) - u * normal_mass(a, b))
                } else {
                    -q_inv(q(-a) + u * normal_mass(a, b))
                };
                (mu + sigma * z).clamp(*lo, *hi)
            }
            Marginal::TruncExp { rate, lo, hi } => {
                let w = hi - lo;
                let x = if rate.abs() * w < 1e-12 {
                    u * w
                } else {
                    // Solve (1 - e^{-rate x}) / (1 - e^{-rate w}) = u.
                    -(u * (-rate * w).exp_m1()).ln_1p() / rate
                };
                (lo + x).clamp(*lo, *hi)
            }
            Marginal::Uniform { lo, hi } => lo + u * (hi - lo),
            Marginal::Discrete { values, probs } => {
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("checked non-empty")
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Marginal::TruncNormal { mu, sigma, lo, hi } => {
                let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
                let pdf = |z: f64| {
                    if z.is_infinite() {
                        0.0
                    } else {
                        (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
                    }
                };
                mu + sigma * (pdf(a) - pdf(b)) / normal_mass(a, b)
            }
            Marginal::TruncExp { rate, lo, hi } => lo + exp_mean(*rate, hi - lo),
            Marginal::Uniform { lo, hi } => 0.5 * (lo + hi),
            Marginal::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
        }
    }

    fn same_support(&self, other: &Marginal) -> bool {
        match (self, other) {
            (Marginal::Discrete { values: a, probs: pa }, Marginal::Discrete { values: b, probs: pb }) => {
                a.iter().zip(pa).all(|(v, p)| {
                    *p == 0.0 || b.iter().zip(pb).any(|(w, q)| w == v && *q > 0.0)
                })
            }
            (Marginal::Discrete { .. }, _) | (_, Marginal::Discrete { .. }) => false,
            _ => self.bounds() == other.bounds(),
        }
    }
}

/// `ln((1 - e^{-rate w}) / rate)`, the log normalizer of the truncated
/// exponential on a window of width `w`.
fn exp_log_norm(rate: f64, w: f64) -> f64 {
    if rate.abs() * w < 1e-12 {
        w.ln()
    } else if rate > 0.0 {
        (-(-rate * w).exp_m1()).ln() - rate.ln()
    } else {
        // (e^{|r| w} - 1) / |r|
        let r = -rate;
        r * w + (-(-r * w).exp_m1()).ln() - r.ln()
    }
}

/// Mean offset from `lo` of the truncated exponential on a window `w`.
pub fn exp_mean(rate: f64, w: f64) -> f64 {
    let t = rate * w;
    if t.abs() < 1e-6 {
        return w * (0.5 - t / 12.0);
    }
    1.0 / rate - w / t.exp_m1()
}

/// Rate whose truncated exponential on window `w` has mean offset `m`,
/// found by bisection (the mean is decreasing in the rate).
pub fn exp_rate_for_mean(m: f64, w: f64) -> f64 {
    let m = m.clamp(w * 1e-6, w * (1.0 - 1e-6));
    let (mut lo, mut hi) = (-1e3 / w, 1e3 / w);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if exp_mean(mid, w) > m {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A product distribution over named dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioModel {
    pub dims: Vec<(String, Marginal)>,
}

impl ScenarioModel {
    pub fn new(dims: Vec<(String, Marginal)>) -> Result<Self, ModelError> {
        for (name, m) in &dims {
            m.check().map_err(|reason| ModelError::InvalidMarginal {
                name: name.clone(),
                reason,
            })?;
        }
        Ok(ScenarioModel { dims })
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.dims.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn marginal(&self, name: &str) -> Option<&Marginal> {
        self.dims.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn ln_pdf(&self, x: &[f64]) -> f64 {
        self.dims.iter().zip(x).map(|((_, m), v)| m.ln_pdf(*v)).sum()
    }

    /// Maps one uniform per dimension through the inverse CDFs.
    pub fn transform(&self, u: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(u).map(|((_, m), u)| m.quantile(*u)).collect()
    }

    /// Keeps only the named dimensions, in the given order.
    pub fn project(&self, names: &[&str]) -> Result<Self, ModelError> {
        let dims = names
            .iter()
            .map(|n| {
                self.marginal(n)
                    .map(|m| (n.to_string(), m.clone()))
                    .ok_or_else(|| ModelError::DimensionMismatch(format!("no dimension {n}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(ScenarioModel { dims })
    }

    /// Absolute continuity check for a proposal: same dimensions and the
    /// proposal covers the nominal support.
    pub fn check_proposal(&self, proposal: &ScenarioModel) -> Result<(), ModelError> {
        if self.names() != proposal.names() {
            return Err(ModelError::DimensionMismatch(format!(
                "nominal {:?} vs proposal {:?}",
                self.names(),
                proposal.names()
            )));
        }
        for ((name, f), (_, g)) in self.dims.iter().zip(&proposal.dims) {
            if !f.same_support(g) {
                return Err(ModelError::SupportMismatch(name.clone()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(m: &Marginal, lo: f64, hi: f64) -> f64 {
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        (0..n).map(|i| m.ln_pdf(lo + (i as f64 + 0.5) * h).exp() * h).sum()
    }

    #[test]
    fn densities_integrate_to_one() {
        let cases = [
            Marginal::TruncNormal { mu: 30.0, sigma: 8.0, lo: 0.0, hi: 60.0 },
            Marginal::TruncNormal { mu: 5.0, sigma: 2.0, lo: 20.0, hi: 40.0 },
            Marginal::TruncExp { rate: 0.667, lo: 0.0, hi: 12.0 },
            Marginal::TruncExp { rate: -0.4, lo: 0.0, hi: 12.0 },
            Marginal::Uniform { lo: 0.0, hi: 10.0 },
        ];
        for m in &cases {
            m.check().unwrap();
            let (lo, hi) = m.bounds();
            assert!((integrate(m, lo, hi) - 1.0).abs() < 1e-6, "{m:?}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let m = Marginal::TruncNormal { mu: 30.0, sigma: 8.0, lo: 0.0, hi: 60.0 };
        for u in [1e-6, 0.01, 0.3, 0.5, 0.9, 0.999] {
            let x = m.quantile(u);
            assert!((integrate(&m, 0.0, x) - u).abs() < 1e-5, "u={u}");
        }
        let tail = Marginal::TruncNormal { mu: 0.0, sigma: 1.0, lo: 6.0, hi: f64::INFINITY };
        assert!(tail.quantile(0.5) > 6.0 && tail.quantile(0.5) < 6.2);
        let e = Marginal::TruncExp { rate: 0.5, lo: 0.0, hi: 12.0 };
        let x = e.quantile(0.5);
        assert!((integrate(&e, 0.0, x) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn exp_rate_roundtrip() {
        for rate in [-1.0, -0.1, 0.0, 0.3, 2.0] {
            let m = exp_mean(rate, 12.0);
            assert!((exp_rate_for_mean(m, 12.0) - rate).abs() < 1e-6, "rate {rate}");
        }
        let m = Marginal::TruncExp { rate: 0.3, lo: 0.0, hi: 12.0 };
        let numeric: f64 = {
            let n = 100_000;
            let h = 12.0 / n as f64;
            (0..n).map(|i| {
                let x = (i as f64 + 0.5) * h;
                x * m.ln_pdf(x).exp() * h
            }).sum()
        };
        assert!((m.mean() - numeric).abs() < 1e-6);
    }

    #[test]
    fn support_checks() {
        let f = ScenarioModel::new(vec![("g".into(), Marginal::Uniform { lo: 0.0, hi: 1.0 })]).unwrap();
        let g = ScenarioModel::new(vec![("g".into(), Marginal::Uniform { lo: 0.0, hi: 2.0 })]).unwrap();
        assert!(f.check_proposal(&f).is_ok());
        assert_eq!(f.check_proposal(&g), Err(ModelError::SupportMismatch("g".into())));
        assert!(ScenarioModel::new(vec![("s".into(), Marginal::TruncNormal { mu: 0.0, sigma: 0.0, lo: -1.0, hi: 1.0 })]).is_err());
    }
}
