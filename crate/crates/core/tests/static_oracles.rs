mod common;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use avvet::ir::parse_program;
use avvet::pipeline::AppPackage;
use avvet::vetting::taint::{all_sinks, location_sources};
use avvet::vetting::temporal::find_violation;
use avvet::vetting::{builtin_rules, run_static_vetting, taint_analysis, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{corpus_labels, corpus_packages, taint_by_paths, temporal_by_paths, FlowKey};

fn flows_of(p: &avvet::ir::AppProgram) -> BTreeSet<FlowKey> {
    taint_analysis(p, &location_sources(), &all_sinks())
        .into_iter()
        .map(|f| (f.source, f.sink.to_string(), f.location))
        .collect()
}

#[test]
fn corpus_matches_labels() {
    let labels = corpus_labels();
    let pkgs = corpus_packages();
    assert_eq!(pkgs.len(), 7);
    for path in pkgs {
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        let report = run_static_vetting(&AppPackage::read_dir(&path).unwrap(), &builtin_rules());
        let want = &labels[&name].static_verdict;
        let got = match report.verdict {
            Verdict::Pass => "pass",
            Verdict::Reject => "reject",
        };
        assert_eq!(got, want, "{name}:\n{}", report.render());
    }
}

#[test]
fn corpus_taint_and_temporal_match_oracles() {
    for path in corpus_packages() {
        let app = AppPackage::read_dir(&path).unwrap().load().unwrap();
        let p = &*app.program;
        assert_eq!(flows_of(p), taint_by_paths(p, &location_sources(), 3), "{}", path.display());
        for r in builtin_rules() {
            let got: BTreeSet<String> = find_violation(p, &r).into_iter().map(|v| v.bad_state).collect();
            let want = temporal_by_paths(p, &r, 3);
            assert_eq!(got.is_empty(), want.is_empty(), "{} / {}", path.display(), r.rule_id);
            assert!(got.is_subset(&want));
        }
    }
}

#[test]
fn privacy_leak_witness_reaches_netsend() {
    let pkg = AppPackage::read_dir(&common::corpus_dir().join("privacy_leak.avpkg")).unwrap();
    let report = run_static_vetting(&pkg, &builtin_rules());
    let f = report
        .findings
        .iter()
        .find(|f| f.rule == "location_to_undeclared_host")
        .expect("taint finding");
    assert!(!f.witness.is_empty());
    assert_eq!(f.witness.last(), Some(&f.path));
}

/// Random well-typed program with at most eight blocks in total.
fn random_program(rng: &mut ChaCha8Rng, with_globals: bool) -> String {
    let mut s = String::from("app rnd\n");
    if with_globals {
        s.push_str("global g0 = 0\nglobal g1 = 0\n");
    }
    let triggers: &[&str] = if rng.gen_bool(0.5) {
        &["vehicle_report", "traffic_signal"]
    } else {
        &["vehicle_report"]
    };
    let per = 8 / triggers.len();
    for trig in triggers {
        let nb = rng.gen_range(1..=per.min(4));
        let _ = writeln!(s, "handler {trig}:");
        for b in 0..nb {
            let _ = writeln!(s, "  block b{b}:");
            if b == 0 {
                let f = if *trig == "vehicle_report" {
                    ["vehicle_report.position.x", "vehicle_report.speed", "vehicle_report.gear"][rng.gen_range(0..3)]
                } else {
                    "traffic_signal.state"
                };
                let _ = writeln!(s, "    n0 = field {f}\n    n1 = const 0\n    n2 = const 30\n    c = lt n1 n0\n    e = const false");
            }
            for _ in 0..rng.gen_range(0..=4) {
                let n = format!("n{}", rng.gen_range(0..3));
                let m = format!("n{}", rng.gen_range(0..3));
                let line = match rng.gen_range(0..13) {
                    0 => format!("{n} = const {}", ["park", "drive", "0", "30", "red"][rng.gen_range(0..5)]),
                    1 => format!("e = const {}", rng.gen_bool(0.5)),
                    2 => format!("{n} = add {n} {m}"),
                    3 => format!("c = lt {n} {m}"),
                    4 => format!("publish gear_cmd gear={n}"),
                    5 => "publish engine_cmd on=e".to_string(),
                    6 => format!("publish throttle_cmd percent={n}"),
                    7 => format!("publish brake_cmd percent={n}"),
                    8 => format!("netsend \"h.example\" {n}"),
                    9 => format!("store \"k\" {n}"),
                    10 if with_globals => format!("setglobal g{} {n}", rng.gen_range(0..2)),
                    11 if with_globals => format!("{n} = global g{}", rng.gen_range(0..2)),
                    _ => format!("{n} = field {}", if *trig == "vehicle_report" { "vehicle_report.position.y" } else { "traffic_signal.state" }),
                };
                let _ = writeln!(s, "    {line}");
            }
            let term = match rng.gen_range(0..3) {
                0 => "halt".to_string(),
                1 => format!("jump b{}", rng.gen_range(0..nb)),
                _ => format!("branch c b{} b{}", rng.gen_range(0..nb), rng.gen_range(0..nb)),
            };
            let _ = writeln!(s, "    {term}");
        }
    }
    s
}

#[test]
fn temporal_checker_agrees_with_product_bfs_on_random_programs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rules = builtin_rules();
    let mut violations = 0;
    for i in 0..400 {
        let text = random_program(&mut rng, i % 2 == 0);
        let p = parse_program(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        for r in &rules {
            let got = find_violation(&p, r).is_some();
            let want = !temporal_by_paths(&p, r, 3).is_empty();
            assert_eq!(got, want, "rule {}\n{text}", r.rule_id);
            violations += usize::from(got);
        }
    }
    assert!(violations > 20 && violations < 780, "generator too one-sided: {violations}");
}

#[test]
fn taint_is_sound_and_exact_without_globals() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut nonempty = 0;
    for i in 0..400 {
        let globals = i % 2 == 0;
        let text = random_program(&mut rng, globals);
        let p = parse_program(&text).unwrap();
        let got = flows_of(&p);
        let want = taint_by_paths(&p, &location_sources(), 3);
        if globals {
            assert!(want.is_subset(&got), "missed flow\n{text}");
        } else {
            assert_eq!(got, want, "\n{text}");
        }
        nonempty += usize::from(!got.is_empty());
    }
    assert!(nonempty > 20);
}
