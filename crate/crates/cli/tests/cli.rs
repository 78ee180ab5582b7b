use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn avvet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avvet"))
        .args(args)
        .current_dir(root())
        .output()
        .expect("spawn avvet")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn vet_privacy_leak_is_rejected_statically() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("report.json");
    let o = avvet(&["vet", "corpus/privacy_leak.avpkg", "--out", json.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("location_to_undeclared_host"), "{out}");
    assert!(out.contains("final verdict: rejected_static"), "{out}");

    let r = avvet(&["report", json.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(stdout(&r), out);
}

#[test]
fn estimate_aggressive_follower() {
    let o = avvet(&[
        "estimate",
        "corpus/aggressive_follower.avpkg",
        "--traces",
        "corpus/traces/naturalistic.csv",
    ]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{out}");
    let summary = out.split_once("[summary]\n").expect("summary section").1;
    let field = |k: &str| -> String {
        summary
            .lines()
            .find_map(|l| l.strip_prefix(k).and_then(|r| r.strip_prefix('=')))
            .unwrap_or_else(|| panic!("missing {k}"))
            .to_string()
    };
    let factor: f64 = field("acceleration_factor").parse().unwrap();
    assert!(factor >= 100.0, "{summary}");
    assert_eq!(field("verdict"), "reject");
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let p = dir.path().join(name);
        let o = avvet(&[
            "simulate",
            "corpus/full_throttle_follower.avpkg",
            "--scenario",
            "corpus/scenarios/test_track.toml",
            "--seed",
            "5",
            "--export",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.code().is_some_and(|c| c <= 1), "{}", String::from_utf8_lossy(&o.stderr));
        (stdout(&o), std::fs::read(p).unwrap())
    };
    let a = run("a.csv");
    let b = run("b.csv");
    assert_eq!(a, b);
    assert!(a.1.len() > 1000);
}

#[test]
fn sign_requires_approval_and_install_checks_signature() {
    let dir = tempfile::tempdir().unwrap();
    let market = dir.path().join("market");
    let m = market.to_str().unwrap();
    assert!(avvet(&["keygen", "--market", m, "--seed", "4"]).status.success());

    let pkg = dir.path().join("app.avpkg");
    let o = Command::new("cp")
        .args(["-r", "corpus/aggressive_follower.avpkg", pkg.to_str().unwrap()])
        .current_dir(root())
        .status()
        .unwrap();
    assert!(o.success());
    let p = pkg.to_str().unwrap();
    let s = avvet(&["sign", p, "--market", m]);
    assert_eq!(s.status.code(), Some(1));
    assert!(stdout(&s).contains("refused"), "{}", stdout(&s));

    let key = market.join("market.pub");
    let vehicle = dir.path().join("car");
    let i = avvet(&["install", p, "--key", key.to_str().unwrap(), "--vehicle", vehicle.to_str().unwrap()]);
    assert_eq!(i.status.code(), Some(1));
    assert!(stdout(&i).contains("refused"), "{}", stdout(&i));
    assert!(!vehicle.join("apps/aggressive_follower").exists());
}

#[test]
fn gen_traces_reproduces_corpus() {
    let want = std::fs::read_to_string(root().join("corpus/traces/naturalistic.csv")).unwrap();
    let n = (want.lines().count() - 1).to_string();
    let o = avvet(&["gen-traces", "--model", "corpus/traces/model.toml", "--n", &n]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), want);
}

#[test]
fn missing_package_is_an_error() {
    let o = avvet(&["vet", "corpus/does_not_exist.avpkg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
}
