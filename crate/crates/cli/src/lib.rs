//! Experiment orchestration over `gjn-core`: spec loading, the seven
//! subcommands, and run persistence.

pub mod args;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;

use std::path::PathBuf;
use std::sync::Arc;

use chrono::Utc;
use gjn_core::sim::RunConfig;
use gjn_core::{corpus, Decimal, NetworkSpec, ScaledNetwork};

use args::{Cli, Command, RunArgs};
use commands::{analyze, product_form, routing, simulate, statements, sweep, verify_bar};
use error::CliError;
use manifest::{Manifest, PointRef, MANIFEST_SCHEMA};
use output::{RunDir, Table, TIMESTAMP_FORMAT};

/// Resolved global flags.
#[derive(Debug, Clone)]
pub struct Global {
    pub spec: Arc<NetworkSpec>,
    pub source: String,
    pub seed: u64,
    pub jobs: usize,
}

/// What a subcommand hands back for persistence.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub results: Table,
    pub report: serde_json::Value,
    /// Further files relative to the run directory.
    pub extra: Vec<(String, Vec<u8>)>,
    pub points: Vec<PointRef>,
    /// `false` on a statistical FAIL.
    pub pass: bool,
    /// One-line verdicts for the terminal.
    pub lines: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub dir: PathBuf,
    pub pass: bool,
    pub lines: Vec<String>,
    pub report: serde_json::Value,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            3
        }
    }
}

/// `--spec` as a file path or `corpus:<name>`.
pub fn load_spec(source: &str) -> Result<NetworkSpec, CliError> {
    if let Some(name) = source.strip_prefix("corpus:") {
        return corpus::by_name(name).ok_or_else(|| {
            CliError::invalid(format!(
                "unknown corpus network {name:?}; expected one of {}",
                corpus::NAMES.join(", ")
            ))
        });
    }
    let text = std::fs::read_to_string(source).map_err(|e| CliError::io(source, e))?;
    Ok(NetworkSpec::from_json(&text)?)
}

pub fn scaled(spec: &Arc<NetworkSpec>, r: &Decimal) -> Result<ScaledNetwork, CliError> {
    Ok(ScaledNetwork::new(spec.clone(), r.value())?)
}

/// Default horizon schedule `H0 * 0.3 / r`.
pub fn scheduled_horizon(h0: f64, r: f64) -> f64 {
    h0 * 0.3 / r
}

pub fn run_config(run: &RunArgs, default_horizon: f64, seed: u64) -> Result<RunConfig, CliError> {
    if run.reps == 0 {
        return Err(CliError::invalid("--reps must be at least 1"));
    }
    let mut cfg = RunConfig::new(run.horizon.as_ref().map_or(default_horizon, Decimal::value), seed);
    cfg.warmup_fraction = run.warmup.value();
    cfg.batches = run.batches;
    cfg.confidence = run.confidence.value();
    cfg.validate()?;
    Ok(cfg)
}

/// `RunConfig` with its reals as decimal strings.
pub fn config_json(cfg: &RunConfig) -> serde_json::Value {
    use gjn_core::decimal::dec;
    serde_json::json!({
        "horizon": dec(cfg.horizon),
        "warmup_fraction": dec(cfg.warmup_fraction),
        "batches": cfg.batches,
        "seed": cfg.seed,
        "thin": cfg.thin,
        "confidence": dec(cfg.confidence),
    })
}

fn pretty(v: &serde_json::Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s.into_bytes()
}

fn resolve(cli: &Cli) -> Result<(Global, Command), CliError> {
    if let Command::Sweep(a) = &cli.command {
        if let Some(path) = &a.replay {
            let m = Manifest::load(path)?;
            if !matches!(m.command, Command::Sweep(_)) {
                return Err(CliError::invalid(format!(
                    "{} records a {} run, not a sweep",
                    path.display(),
                    m.subcommand
                )));
            }
            let spec = NetworkSpec::new(m.spec)?;
            if spec.hash() != m.spec_hash {
                return Err(CliError::invalid("embedded spec does not match its recorded hash"));
            }
            let global = Global {
                spec: Arc::new(spec),
                source: m.spec_source,
                seed: m.seed,
                jobs: cli.jobs,
            };
            return Ok((global, m.command));
        }
    }
    let source = cli
        .spec
        .clone()
        .ok_or_else(|| CliError::invalid("--spec is required"))?;
    let global = Global {
        spec: Arc::new(load_spec(&source)?),
        source,
        seed: cli.seed,
        jobs: cli.jobs,
    };
    Ok((global, cli.command.clone()))
}

/// Runs one subcommand and writes its run directory.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let started = Utc::now();
    let (global, command) = resolve(cli)?;
    let hash = global.spec.hash();
    let dir = RunDir::new(&cli.out, &hash, command.name(), started);
    let art = match &command {
        Command::Analyze(a) => analyze::run(&global, a)?,
        Command::Simulate(a) => simulate::run(&global, a)?,
        Command::VerifyBar(a) => verify_bar::run(&global, a)?,
        Command::Statements(a) => statements::run(&global, a)?,
        Command::Sweep(a) => sweep::run(&global, a, &dir)?,
        Command::ProductForm(a) => product_form::run(&global, a)?,
        Command::RoutingOracle(a) => routing::run(&global, a)?,
    };
    let mut files = vec!["results.csv".to_string(), "report.json".to_string()];
    dir.write("results.csv", &art.results.to_csv())?;
    dir.write("report.json", &pretty(&art.report))?;
    for (name, bytes) in &art.extra {
        dir.write(name, bytes)?;
        files.push(name.clone());
    }
    let manifest = Manifest {
        schema: MANIFEST_SCHEMA.to_string(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: command.name().to_string(),
        spec_source: global.source.clone(),
        spec_hash: hash,
        spec: global.spec.file().clone(),
        seed: global.seed,
        jobs: global.jobs,
        command,
        started: started.format(TIMESTAMP_FORMAT).to_string(),
        finished: Utc::now().format(TIMESTAMP_FORMAT).to_string(),
        files,
        points: art.points,
    };
    let json = serde_json::to_value(&manifest).expect("manifest serializes");
    dir.write("manifest.json", &pretty(&json))?;
    Ok(Outcome {
        dir: dir.path()?,
        pass: art.pass,
        lines: art.lines,
        report: art.report,
    })
}
