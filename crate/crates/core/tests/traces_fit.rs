mod common;

use avvet::eval::{fit_model, generate_traces, write_traces, FitConfig, FitError, Marginal, TraceModelConfig};

use common::{corpus_dir, simpson};

fn model_config() -> TraceModelConfig {
    toml::from_str(&std::fs::read_to_string(corpus_dir().join("traces/model.toml")).unwrap()).unwrap()
}

#[test]
fn corpus_traces_regenerate_from_model() {
    let cfg = model_config();
    let text = std::fs::read_to_string(corpus_dir().join("traces/naturalistic.csv")).unwrap();
    let n = text.lines().count() - 1;
    assert_eq!(write_traces(&generate_traces(&cfg, n, cfg.seed).unwrap()), text);
}

#[test]
fn fit_recovers_generating_parameters() {
    let mut cfg = model_config();
    cfg.circumstance.retain(|c| c.tag == "highway");
    let n = 20_000;
    let recs = generate_traces(&cfg, n, 77).unwrap();
    let fitted = fit_model(&recs, &FitConfig::default()).unwrap();
    let sqrt_n = (n as f64).sqrt();

    for (name, mu, sigma) in [("initial_gap", 40.0, 8.0), ("ego_speed", 28.0, 2.5), ("lead_speed", 28.0, 2.5)] {
        let Some(Marginal::TruncNormal { mu: m, sigma: s, .. }) = fitted.marginal(name) else {
            panic!("{name} is not a truncated normal");
        };
        assert!((m - mu).abs() < 3.0 * sigma / sqrt_n, "{name}: mu {m}");
        assert!((s - sigma).abs() < 3.0 * sigma / (2.0 * n as f64).sqrt(), "{name}: sigma {s}");
    }

    // Mean of Exp(0.6667) truncated to (0, 12], by quadrature.
    let rate = 0.6667_f64;
    let mass = simpson(|x| rate * (-rate * x).exp(), 0.0, 12.0, 20_000);
    let mean = simpson(|x| x * rate * (-rate * x).exp(), 0.0, 12.0, 20_000) / mass;
    let Some(Marginal::TruncExp { rate: fit_rate, lo, hi }) = fitted.marginal("lead_decel") else {
        panic!("lead_decel is not exponential");
    };
    assert_eq!((*lo, *hi), (0.0, 12.0));
    let fit_mean = 1.0 / fit_rate;
    assert!((fit_mean - mean).abs() < 3.0 * mean / sqrt_n, "decel mean {fit_mean} vs {mean}");
    assert!((fit_rate - 0.667).abs() < 0.02, "rate {fit_rate}");

    assert_eq!(fitted.marginal("decel_onset"), Some(&Marginal::Uniform { lo: 0.0, hi: 10.0 }));
}

#[test]
fn fit_rejects_bad_input() {
    let cfg = model_config();
    let recs = generate_traces(&cfg, 29, 1).unwrap();
    assert_eq!(
        fit_model(&recs, &FitConfig::default()),
        Err(FitError::InsufficientData { min: 30, got: 29 })
    );
    let mut recs = generate_traces(&cfg, 100, 1).unwrap();
    recs[4].ego_speed = f64::NAN;
    assert!(matches!(
        fit_model(&recs, &FitConfig::default()),
        Err(FitError::OutOfBounds { index: 4, .. })
    ));
    let mut recs = generate_traces(&cfg, 100, 1).unwrap();
    for r in &mut recs {
        r.lead_speed = 20.0;
    }
    assert_eq!(
        fit_model(&recs, &FitConfig::default()),
        Err(FitError::DegenerateVariance("lead_speed".into()))
    );
}
