//! Crude Monte Carlo and importance-sampling estimators of a rare-event
//! probability, with seeded per-draw randomness.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{ModelError, ScenarioModel};

/// Result of evaluating one scenario. Lower severity is worse; the event
/// occurred iff `hit`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub hit: bool,
    pub severity: f64,
}

impl Outcome {
    /// Event defined as `severity <= 0`.
    pub fn from_severity(severity: f64) -> Self {
        Outcome {
            hit: severity <= 0.0,
            severity,
        }
    }
}

/// Deterministic map from a scenario draw to an outcome. `draw` is the
/// index of the draw within its batch.
pub trait Indicator: Sync {
    fn evaluate(&self, x: &[f64], draw: u64) -> Outcome;
}

/// Indicator given by a closure returning severity.
pub struct SeverityFn<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Indicator for SeverityFn<F> {
    fn evaluate(&self, x: &[f64], _draw: u64) -> Outcome {
        Outcome::from_severity((self.0)(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub p_hat: f64,
    pub std_err: f64,
    pub ci95: (f64, f64),
    pub n: usize,
    pub sum_w: f64,
    pub sum_w2: f64,
    pub hits: usize,
}

impl Estimate {
    /// From accumulators of `ind * w` and `(ind * w)^2` over `n` draws.
    pub fn from_sums(n: usize, hits: usize, sum_w: f64, sum_w2: f64) -> Self {
        let nf = n as f64;
        let p_hat = (sum_w / nf).clamp(0.0, 1.0);
        let var = (sum_w2 / nf - p_hat * p_hat).max(0.0);
        let std_err = (var / nf).sqrt();
        let half = 1.959_963_984_540_054 * std_err;
        Estimate {
            p_hat,
            std_err,
            ci95: ((p_hat - half).max(0.0), (p_hat + half).min(1.0)),
            n,
            sum_w,
            sum_w2,
            hits,
        }
    }

    /// Per-draw relative variance `n * se^2 / p^2`.
    pub fn relative_variance(&self) -> f64 {
        self.n as f64 * self.std_err * self.std_err / (self.p_hat * self.p_hat)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("non-finite likelihood ratio at draw {draw} (x = {x:?}, log w = {log_w})")]
    NonFiniteWeight { draw: u64, x: Vec<f64>, log_w: f64 },
    #[error("estimate has no hits; acceleration factor undefined")]
    ZeroHits,
    #[error("sample size must be positive")]
    EmptySample,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// SplitMix64 finalizer, used to derive independent per-draw seeds.
pub fn mix_seed(seed: u64, stream: u64, i: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(i.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniforms in (0, 1) for draw `i` of a batch.
pub fn draw_uniforms(seed: u64, stream: u64, i: u64, d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stream, i));
    (0..d).map(|_| rng.sample(Open01)).collect()
}

/// Sum with pairwise splitting; the fixed split order makes the result
/// independent of how the terms were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// One evaluated draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub outcome: Outcome,
    /// `ln f_nominal(x) - ln g(x)`.
    pub log_w: f64,
}

/// Draws `n` scenarios from `g` and evaluates them in parallel. Order of
/// the returned samples is the draw order.
pub fn sample_batch(
    ind: &dyn Indicator,
    nominal: &ScenarioModel,
    g: &ScenarioModel,
    n: usize,
    seed: u64,
    stream: u64,
) -> Vec<Sample> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let x = g.transform(&draw_uniforms(seed, stream, i, g.len()));
            let outcome = ind.evaluate(&x, i);
            let log_w = nominal.ln_pdf(&x) - g.ln_pdf(&x);
            Sample { x, outcome, log_w }
        })
        .collect()
}

fn accumulate(samples: &[Sample]) -> Result<Estimate, EvalError> {
    let mut ys = Vec::with_capacity(samples.len());
    let mut hits = 0;
    for (i, s) in samples.iter().enumerate() {
        if s.log_w.is_nan() || s.log_w == f64::INFINITY {
            return Err(EvalError::NonFiniteWeight {
                draw: i as u64,
                x: s.x.clone(),
                log_w: s.log_w,
            });
        }
        if s.outcome.hit {
            let w = s.log_w.exp();
            if !(w > 0.0 && w.is_finite()) {
                return Err(EvalError::NonFiniteWeight {
                    draw: i as u64,
                    x: s.x.clone(),
                    log_w: s.log_w,
                });
            }
            hits += 1;
            ys.push(w);
        } else {
            ys.push(0.0);
        }
    }
    let sq: Vec<f64> = ys.iter().map(|y| y * y).collect();
    Ok(Estimate::from_sums(samples.len(), hits, pairwise_sum(&ys), pairwise_sum(&sq)))
}

/// Stream tag for estimation batches; search iterations use their own.
const ESTIMATE_STREAM: u64 = 0;

pub fn crude_mc(ind: &dyn Indicator, model: &ScenarioModel, n: usize, seed: u64) -> Estimate {
    assert!(n >= 1, "crude_mc needs at least one draw");
    let hits = (0..n as u64)
        .into_par_iter()
        .filter(|&i| {
            let x = model.transform(&draw_uniforms(seed, ESTIMATE_STREAM, i, model.len()));
            ind.evaluate(&x, i).hit
        })
        .count();
    let h = hits as f64;
    Estimate::from_sums(n, hits, h, h)
}

pub fn is_estimate(
    ind: &dyn Indicator,
    nominal: &ScenarioModel,
    proposal: &ScenarioModel,
    n: usize,
    seed: u64,
) -> Result<Estimate, EvalError> {
    if n == 0 {
        return Err(EvalError::EmptySample);
    }
    nominal.check_proposal(proposal)?;
    accumulate(&sample_batch(ind, nominal, proposal, n, seed, ESTIMATE_STREAM))
}

/// Speed-up of the estimator behind `est` over crude Monte Carlo, in
/// samples needed to reach relative error `target_rel_err`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acceleration {
    pub factor: f64,
    pub n_mc: f64,
    pub n_is: f64,
}

/// The per-draw relative variance is floored at the Bernoulli value
/// `(1-p)/p` capped at 1, so a zero-variance estimator scores the
/// perfect-proposal limit `(1-p)/p` rather than infinity.
pub fn acceleration_factor(est: &Estimate, target_rel_err: f64) -> Result<Acceleration, EvalError> {
    if est.hits == 0 || est.p_hat <= 0.0 {
        return Err(EvalError::ZeroHits);
    }
    let p = est.p_hat;
    let r2 = target_rel_err * target_rel_err;
    let bern = (1.0 - p) / p;
    let n_mc = bern / r2;
    if bern == 0.0 {
        return Ok(Acceleration { factor: 1.0, n_mc, n_is: n_mc });
    }
    let rel = est.relative_variance().max(bern.min(1.0));
    let n_is = rel / r2;
    Ok(Acceleration {
        factor: n_mc / n_is,
        n_mc,
        n_is,
    })
}
