use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use avvet::eval::{generate_traces, read_traces, run_dynamic_vetting, DynamicConfig, TraceModelConfig, TraceRecord};
use avvet::pipeline::market::read_verifying_key;
use avvet::pipeline::{
    vet_loaded, AppPackage, ApprovalRecord, FinalVerdict, InstallError, MarketRegistry, RegistryError, ScenarioFile,
    SignError, VehicleStore, VetReport,
};
use avvet::sim::{run_episode, trajectory_csv};
use avvet::vetting::{builtin_rules, parse_rule, Verdict};
use avvet::watchdog::WatchdogConfig;

const DEFAULT_TRACES: &str = "corpus/traces/naturalistic.csv";

#[derive(Parser)]
#[command(name = "avvet", about = "Vet, sign, install and simulate autonomous-vehicle apps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Static then dynamic vetting of a package directory.
    Vet {
        pkg: PathBuf,
        #[arg(long, default_value = DEFAULT_TRACES)]
        traces: PathBuf,
        /// Extra rule files, added to the built-in rules.
        #[arg(long = "rule")]
        rules: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Importance-sampling episodes.
        #[arg(long, default_value_t = 2000)]
        n: usize,
        /// Write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record an approval in this market registry when approved.
        #[arg(long)]
        market: Option<PathBuf>,
    },
    /// Sign an approved package with the market key, in place.
    Sign {
        pkg: PathBuf,
        #[arg(long)]
        market: PathBuf,
    },
    /// Verify a signed package and install it into a vehicle directory.
    Install {
        pkg: PathBuf,
        /// Market public key file (hex).
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        vehicle: PathBuf,
    },
    /// Run one episode and export its trajectory.
    Simulate {
        pkg: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        no_watchdog: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        export: PathBuf,
    },
    /// Dynamic vetting only: crash probability by importance sampling.
    Estimate {
        pkg: PathBuf,
        #[arg(long)]
        traces: PathBuf,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },
    /// Generate synthetic naturalistic traces from a model file.
    GenTraces {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        n: usize,
        /// Overrides the seed in the model file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a saved vet report.
    Report { report: PathBuf },
    /// Create a market registry with a fresh key pair.
    Keygen {
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Status {
    Ok,
    Reject,
}

fn load_pkg(path: &Path) -> Result<AppPackage> {
    AppPackage::read_dir(path).with_context(|| format!("reading package {}", path.display()))
}

fn load_traces(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading traces {}", path.display()))?;
    Ok(read_traces(&text)?)
}

fn verdict_status(v: FinalVerdict) -> Status {
    if v == FinalVerdict::Approved {
        Status::Ok
    } else {
        Status::Reject
    }
}

fn run(cmd: Cmd) -> Result<Status> {
    match cmd {
        Cmd::Vet { pkg, traces, rules, seed, n, out, market } => {
            let package = load_pkg(&pkg)?;
            let mut automata = builtin_rules();
            for r in &rules {
                let text = fs::read_to_string(r).with_context(|| format!("reading rule {}", r.display()))?;
                let id = r.file_stem().and_then(|s| s.to_str()).unwrap_or("rule");
                automata.push(parse_rule(id, &text)?);
            }
            let records = if traces.exists() { load_traces(&traces)? } else { Vec::new() };
            let cfg = DynamicConfig { seed, n_is: n, ..DynamicConfig::default() };
            let report = vet_loaded(&package, &automata, &records, &cfg)?;
            print!("{}", report.render());
            if let Some(out) = out {
                fs::write(&out, serde_json::to_string_pretty(&report)?)
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            if let (Some(m), FinalVerdict::Approved) = (market, report.final_verdict) {
                let reg = MarketRegistry::open(&m)?;
                let path = reg.record_approval(&ApprovalRecord::for_package(&report.static_report.app_id, &package))?;
                println!("approval recorded: {}", path.display());
            }
            Ok(verdict_status(report.final_verdict))
        }
        Cmd::Sign { pkg, market } => {
            let package = load_pkg(&pkg)?;
            let app = package.load().map_err(|e| anyhow!(e))?;
            let reg = MarketRegistry::open(&market)?;
            match reg.sign(&app.manifest.app_id, &package) {
                Ok(signed) => {
                    signed.write_dir(&pkg)?;
                    println!("signed {} {}", app.manifest.app_id, signed.version);
                    Ok(Status::Ok)
                }
                Err(RegistryError::Sign(e @ SignError::NotApproved(_))) => {
                    println!("refused: {e}");
                    Ok(Status::Reject)
                }
                Err(e) => Err(e.into()),
            }
        }
        Cmd::Install { pkg, key, vehicle } => {
            let package = load_pkg(&pkg)?;
            let key = read_verifying_key(&key)?;
            match VehicleStore::new(&vehicle).install(&package, &key) {
                Ok(m) => {
                    println!("installed {}", m.app_id);
                    Ok(Status::Ok)
                }
                Err(e @ InstallError::Malformed(_)) => Err(e.into()),
                Err(e) => {
                    println!("refused: {e}");
                    Ok(Status::Reject)
                }
            }
        }
        Cmd::Simulate { pkg, scenario, no_watchdog, seed, export } => {
            let package = load_pkg(&pkg)?;
            let text = fs::read_to_string(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let sf = ScenarioFile::parse(&text).map_err(|e| anyhow!("{}: {e}", scenario.display()))?;
            let base = scenario.parent().unwrap_or(Path::new("."));
            let mut cfg = sf.episode(&package, base).map_err(|e| anyhow!(e))?;
            cfg.seed = seed;
            cfg.record_trajectory = true;
            if !no_watchdog {
                cfg.watchdog = Some(WatchdogConfig::default());
            }
            let r = run_episode(&cfg)?;
            fs::write(&export, trajectory_csv(&r)).with_context(|| format!("writing {}", export.display()))?;
            println!(
                "steps={} crashed={} kind={:?} min_gap={:.3} max_cross_track={:.3} loss_of_control={} interventions={}",
                r.steps,
                r.crashed,
                r.crash_kind,
                r.min_gap,
                r.max_cross_track,
                r.loss_of_control,
                r.interventions.len()
            );
            Ok(if r.crashed { Status::Reject } else { Status::Ok })
        }
        Cmd::Estimate { pkg, traces, n, seed, threshold } => {
            let package = load_pkg(&pkg)?;
            let records = load_traces(&traces)?;
            let cfg = DynamicConfig { seed, n_is: n, threshold, ..DynamicConfig::default() };
            let report = run_dynamic_vetting(&package, &records, &cfg)?;
            print!("{}", report.render());
            Ok(if report.verdict == Verdict::Pass { Status::Ok } else { Status::Reject })
        }
        Cmd::GenTraces { model, n, seed, out } => {
            let text = fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?;
            let cfg: TraceModelConfig = toml::from_str(&text).with_context(|| format!("parsing {}", model.display()))?;
            let records = generate_traces(&cfg, n, seed.unwrap_or(cfg.seed))?;
            let csv = avvet::eval::write_traces(&records);
            match out {
                Some(p) => fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
            Ok(Status::Ok)
        }
        Cmd::Report { report } => {
            let text = fs::read_to_string(&report).with_context(|| format!("reading {}", report.display()))?;
            let r: VetReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", report.display()))?;
            print!("{}", r.render());
            Ok(verdict_status(r.final_verdict))
        }
        Cmd::Keygen { market, seed } => {
            let reg = MarketRegistry::init(&market, seed)?;
            println!("market public key: {}", reg.pub_path().display());
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse().cmd) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Reject) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
