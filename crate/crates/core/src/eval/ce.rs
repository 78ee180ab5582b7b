//! Cross-entropy search for an importance-sampling proposal.

use serde::{Deserialize, Serialize};

use super::estimate::{pairwise_sum, sample_batch, EvalError, Indicator, Sample};
use super::model::{exp_rate_for_mean, Marginal, ScenarioModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeConfig {
    pub iters: usize,
    pub n_per_iter: usize,
    /// Elite fraction.
    pub rho: f64,
    /// Lower bound on a tilted normal's sigma, as a fraction of the
    /// nominal sigma.
    pub min_sigma_frac: f64,
    /// Mixing weight kept on the nominal probabilities for discrete
    /// dimensions, so no atom loses support.
    pub discrete_smoothing: f64,
}

impl Default for CeConfig {
    fn default() -> Self {
        CeConfig {
            iters: 10,
            n_per_iter: 1000,
            rho: 0.1,
            min_sigma_frac: 0.05,
            discrete_smoothing: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeResult {
    pub proposal: ScenarioModel,
    /// Level used at each iteration.
    pub levels: Vec<f64>,
    /// Fraction of hits among each iteration's draws.
    pub hit_rates: Vec<f64>,
    /// Set when the level never reached the event threshold.
    pub no_elite_progress: bool,
}

fn weighted_update(
    nominal: &Marginal,
    current: &Marginal,
    xs: &[f64],
    ws: &[f64],
    cfg: &CeConfig,
) -> Marginal {
    let total = pairwise_sum(ws);
    let mean = pairwise_sum(&xs.iter().zip(ws).map(|(x, w)| x * w).collect::<Vec<_>>()) / total;
    match (nominal, current) {
        (Marginal::TruncNormal { sigma: s0, lo, hi, .. }, _) => {
            let var = pairwise_sum(
                &xs.iter().zip(ws).map(|(x, w)| w * (x - mean) * (x - mean)).collect::<Vec<_>>(),
            ) / total;
            Marginal::TruncNormal {
                mu: mean,
                sigma: var.sqrt().max(cfg.min_sigma_frac * s0),
                lo: *lo,
                hi: *hi,
            }
        }
        (Marginal::TruncExp { lo, hi, .. }, _) => Marginal::TruncExp {
            rate: exp_rate_for_mean(mean - lo, hi - lo),
            lo: *lo,
            hi: *hi,
        },
        (Marginal::Uniform { .. }, _) => current.clone(),
        (Marginal::Discrete { values, probs: p0 }, _) => {
            let a = cfg.discrete_smoothing;
            let probs = values
                .iter()
                .zip(p0)
                .map(|(v, p)| {
                    let mass: f64 = xs.iter().zip(ws).filter(|(x, _)| *x == v).map(|(_, w)| w).sum();
                    (1.0 - a) * mass / total + a * p
                })
                .collect();
            Marginal::Discrete {
                values: values.clone(),
                probs,
            }
        }
    }
}

/// Iterates: draw from the current proposal, set the level to the
/// `rho`-quantile of severity (never above the previous level, never below
/// 0), and refit each dimension by likelihood-ratio-weighted maximum
/// likelihood on the draws at or below the level. Stops once the level has
/// been 0 for two consecutive iterations. Uniform dimensions are not tilted.
pub fn cross_entropy_search(
    ind: &dyn Indicator,
    nominal: &ScenarioModel,
    cfg: &CeConfig,
    seed: u64,
) -> Result<CeResult, EvalError> {
    assert!(cfg.iters >= 1 && cfg.n_per_iter >= 1, "CE needs iters and samples");
    let mut g = nominal.clone();
    let mut levels: Vec<f64> = Vec::new();
    let mut hit_rates = Vec::new();
    let mut at_zero = 0;
    for k in 0..cfg.iters {
        let batch: Vec<Sample> = sample_batch(ind, nominal, &g, cfg.n_per_iter, seed, 1 + k as u64);
        hit_rates.push(batch.iter().filter(|s| s.outcome.hit).count() as f64 / batch.len() as f64);
        let mut sev: Vec<f64> = batch.iter().map(|s| s.outcome.severity).collect();
        sev.sort_by(f64::total_cmp);
        let idx = ((cfg.rho * batch.len() as f64).ceil() as usize).clamp(1, batch.len()) - 1;
        let mut level = sev[idx].max(0.0);
        if let Some(prev) = levels.last() {
            level = level.min(*prev);
        }
        levels.push(level);

        let elite: Vec<&Sample> = batch.iter().filter(|s| s.outcome.severity <= level).collect();
        if !elite.is_empty() {
            let mut ws = Vec::with_capacity(elite.len());
            for (i, s) in elite.iter().enumerate() {
                let w = s.log_w.exp();
                if !w.is_finite() || s.log_w.is_nan() {
                    return Err(EvalError::NonFiniteWeight {
                        draw: i as u64,
                        x: s.x.clone(),
                        log_w: s.log_w,
                    });
                }
                ws.push(w);
            }
            if pairwise_sum(&ws) > 0.0 {
                let dims = nominal
                    .dims
                    .iter()
                    .zip(&g.dims)
                    .enumerate()
                    .map(|(d, ((name, f), (_, cur)))| {
                        let xs: Vec<f64> = elite.iter().map(|s| s.x[d]).collect();
                        (name.clone(), weighted_update(f, cur, &xs, &ws, cfg))
                    })
                    .collect();
                g = ScenarioModel::new(dims)?;
            }
        }

        at_zero = if level <= 0.0 { at_zero + 1 } else { 0 };
        if at_zero >= 2 {
            break;
        }
    }
    let no_elite_progress = levels.last().is_some_and(|l| *l > 0.0);
    Ok(CeResult {
        proposal: g,
        levels,
        hit_rates,
        no_elite_progress,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::estimate::SeverityFn;

    fn std_normal() -> ScenarioModel {
        ScenarioModel::new(vec![(
            "x".into(),
            Marginal::TruncNormal { mu: 0.0, sigma: 1.0, lo: f64::NEG_INFINITY, hi: f64::INFINITY },
        )])
        .unwrap()
    }

    #[test]
    fn common_event_converges_fast() {
        let ind = SeverityFn(|x: &[f64]| 0.5 - x[0]);
        let r = cross_entropy_search(&ind, &std_normal(), &CeConfig::default(), 1).unwrap();
        assert!(r.levels.len() <= 2, "{:?}", r.levels);
        assert!(!r.no_elite_progress);
    }

    #[test]
    fn stagnation_is_flagged() {
        let ind = SeverityFn(|_: &[f64]| 1.0);
        let cfg = CeConfig { iters: 3, n_per_iter: 100, ..CeConfig::default() };
        let r = cross_entropy_search(&ind, &std_normal(), &cfg, 1).unwrap();
        assert!(r.no_elite_progress);
        assert_eq!(r.levels, vec![1.0; 3]);
    }

    #[test]
    fn uniform_dimension_is_left_alone() {
        let m = ScenarioModel::new(vec![("u".into(), Marginal::Uniform { lo: 0.0, hi: 1.0 })]).unwrap();
        let ind = SeverityFn(|x: &[f64]| x[0] - 0.01);
        let r = cross_entropy_search(&ind, &m, &CeConfig::default(), 4).unwrap();
        assert_eq!(r.proposal, m);
    }
}
