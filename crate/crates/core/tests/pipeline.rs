mod common;

use avvet::eval::{read_traces, DynamicConfig, DynamicError, TraceRecord};
use avvet::pipeline::market::{generate_key, sign_package};
use avvet::pipeline::{
    vet_loaded, AppPackage, ApprovalRecord, FinalVerdict, InstallError, MarketRegistry, RegistryError, SignError,
    VehicleStore, VetError,
};
use avvet::vetting::builtin_rules;

use common::{corpus_dir, corpus_labels, corpus_packages};

fn corpus_pkg(name: &str) -> AppPackage {
    AppPackage::read_dir(&corpus_dir().join(format!("{name}.avpkg"))).unwrap()
}

fn corpus_traces() -> Vec<TraceRecord> {
    read_traces(&std::fs::read_to_string(corpus_dir().join("traces/naturalistic.csv")).unwrap()).unwrap()
}

fn signed(pkg: &AppPackage, key: &ed25519_dalek::SigningKey) -> AppPackage {
    let id = pkg.load().unwrap().manifest.app_id;
    sign_package(pkg, key, &[ApprovalRecord::for_package(&id, pkg)]).unwrap()
}

#[test]
fn canonical_bytes_round_trip_on_corpus() {
    for path in corpus_packages() {
        let pkg = AppPackage::read_dir(&path).unwrap();
        let bytes = pkg.canonical_bytes();
        let back = AppPackage::from_canonical_bytes(&bytes).unwrap();
        assert_eq!(back, pkg, "{}", path.display());
        assert_eq!(back.canonical_bytes(), bytes);
    }
}

#[test]
fn second_exclusive_steering_app_conflicts() {
    let dir = tempfile::tempdir().unwrap();
    let key = generate_key(Some(3));
    let store = VehicleStore::new(dir.path());
    let first = signed(&corpus_pkg("path_follower"), &key);
    store.install(&first, &key.verifying_key()).unwrap();
    assert!(matches!(
        store.install(&first, &key.verifying_key()),
        Err(InstallError::Duplicate(_))
    ));
    let second = signed(&corpus_pkg("full_throttle_follower"), &key);
    match store.install(&second, &key.verifying_key()) {
        Err(InstallError::Conflict(found)) => {
            let text: Vec<String> = found.iter().map(|c| c.to_string()).collect();
            assert!(text.iter().any(|t| t.contains("steering")), "{text:?}");
        }
        other => panic!("expected conflict, got {other:?}"),
    }
    let ids: Vec<String> = store.installed().unwrap().into_iter().map(|m| m.app_id).collect();
    assert_eq!(ids, ["path_follower"]);

    let mut tampered = signed(&corpus_pkg("privacy_leak"), &key);
    tampered.program_text.push('\n');
    assert_eq!(store.install(&tampered, &key.verifying_key()), Err(InstallError::Tampered));
}

#[test]
fn traces_without_matching_circumstance_are_refused() {
    let urban_only: Vec<TraceRecord> = corpus_traces().into_iter().filter(|r| r.circumstance == "urban").collect();
    assert!(!urban_only.is_empty());
    let err = vet_loaded(
        &corpus_pkg("aggressive_follower"),
        &builtin_rules(),
        &urban_only,
        &DynamicConfig::default(),
    )
    .unwrap_err();
    match err {
        VetError::Dynamic(DynamicError::NoMatchingTraces(tags)) => assert_eq!(tags, ["highway"]),
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn registry_signs_only_exact_approved_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let reg = MarketRegistry::init(dir.path(), Some(9)).unwrap();
    let pkg = corpus_pkg("path_follower");
    assert!(matches!(
        reg.sign("path_follower", &pkg),
        Err(RegistryError::Sign(SignError::NotApproved(_)))
    ));
    reg.record_approval(&ApprovalRecord::for_package("path_follower", &pkg)).unwrap();
    let mut edited = pkg.clone();
    edited.program_text.push('\n');
    assert!(matches!(
        reg.sign("path_follower", &edited),
        Err(RegistryError::Sign(SignError::NotApproved(_)))
    ));
    let s = reg.sign("path_follower", &pkg).unwrap();
    let index = reg.index().unwrap();
    assert_eq!(index.apps["path_follower"].approval, ApprovalRecord::for_package("path_follower", &pkg));
    assert_eq!(index.market_public_key, hex::encode(reg.verifying_key().unwrap().as_bytes()));
    let vehicle = tempfile::tempdir().unwrap();
    let stored = AppPackage::read_dir(&dir.path().join("packages/path_follower-1.0.0.avpkg")).unwrap();
    assert_eq!(stored, s);
    VehicleStore::new(vehicle.path()).install(&stored, &reg.verifying_key().unwrap()).unwrap();
}

/// Full static and dynamic vetting of every corpus package.
#[test]
fn corpus_final_verdicts_match_labels() {
    let labels = corpus_labels();
    let traces = corpus_traces();
    let rules = builtin_rules();
    for path in corpus_packages() {
        let name = path.file_stem().unwrap().to_str().unwrap().to_string();
        let report = vet_loaded(&AppPackage::read_dir(&path).unwrap(), &rules, &traces, &DynamicConfig::default())
            .unwrap();
        assert_eq!(report.final_verdict.as_str(), labels[&name].final_verdict, "{name}:\n{}", report.render());
        assert_eq!(report.dynamic.is_some(), report.final_verdict != FinalVerdict::RejectedStatic);
    }
}
