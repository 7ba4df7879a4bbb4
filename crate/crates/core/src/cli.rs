//! The `landau` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 integrator
//! blowup. On failure every file the command created is removed. The run
//! manifest (`manifest.json`) is always the last file written.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::diagnostics::{conservation_drift, fit_anisotropy_decay, MomentReport};
use crate::error::{LandauError, Result};
use crate::experiments::{empirical_rate, self_convergence, sigma_invariance, ExperimentKind, ExperimentSpec};
use crate::particles::{read_snapshots, simulate, SimConfig, SnapshotWriter};
use crate::transport::{is_cyclically_monotone, w2_general, EmpiricalMeasure, MonotonicityVerdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_BLOWUP: i32 = 2;
pub const THREADS_ENV: &str = "LANDAU_THREADS";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "landau", version, about = "Landau particle simulation and Wasserstein-2 diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the particle system; writes snapshots.csv, moments.csv.
    Simulate(RunArgs),
    /// Run an experiment spec; writes rate_report.json and rate_replicas.csv
    /// (or invariance_report.json).
    Rates(RunArgs),
    /// Solve W2 between two point clouds; writes plan.csv and transport.json.
    Transport(TransportArgs),
    /// Moment diagnostics of a snapshot file; writes moments.csv and
    /// diagnostics.json.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Inputs come from `--mu/--nu` or from a JSON config `{"mu": .., "nu": ..}`
/// whose relative paths resolve against the config's directory.
#[derive(Debug, Args)]
pub struct TransportArgs {
    /// JSON config naming `mu` and `nu`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Source points: `x0,..[,weight]` or a snapshot CSV.
    #[arg(long)]
    pub mu: Option<PathBuf>,
    /// Target points, same formats as `--mu`.
    #[arg(long)]
    pub nu: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

/// Input comes from `--snapshots` or a JSON config `{"snapshots": ..}`.
#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// JSON config naming `snapshots` and optionally `window`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Snapshot CSV written by `simulate`.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Fit window for the anisotropy decay; defaults to the whole run.
    #[arg(long, num_args = 2, value_names = ["T0", "T1"])]
    pub window: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputFile {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub git: String,
    pub command: String,
    pub args: Vec<String>,
    pub config: Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub started: String,
    pub finished: String,
    pub outputs: Vec<OutputFile>,
}

/// Files a command has created, removed again if the command fails.
struct Outputs {
    dir: PathBuf,
    created_dir: bool,
    files: Vec<String>,
}

impl Outputs {
    fn open(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| LandauError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            created_dir,
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| LandauError::io(&path, e))
    }

    fn discard(self) {
        for f in &self.files {
            let _ = fs::remove_file(self.dir.join(f));
        }
        let _ = fs::remove_file(self.dir.join(MANIFEST_FILE));
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }

    fn checksums(&self) -> Result<Vec<OutputFile>> {
        self.files
            .iter()
            .map(|f| {
                let path = self.dir.join(f);
                let bytes = fs::read(&path).map_err(|e| LandauError::io(&path, e))?;
                Ok(OutputFile {
                    file: f.clone(),
                    bytes: bytes.len() as u64,
                    sha256: hex::encode(Sha256::digest(&bytes)),
                })
            })
            .collect()
    }
}

/// Entry point used by the binary: parses `args`, runs, returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let threads = match configure_threads() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INPUT;
        }
    };
    let echo: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match run(&cli, &echo, threads) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(err: &LandauError) -> i32 {
    match err {
        LandauError::IntegratorBlowup { .. } => EXIT_BLOWUP,
        _ => EXIT_INPUT,
    }
}

/// Caps the global rayon pool at `LANDAU_THREADS` when set.
fn configure_threads() -> Result<usize> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| LandauError::config(THREADS_ENV, format!("expected a positive integer, got {raw:?}")))?;
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

/// Runs one parsed command, writing into its output directory.
pub fn run(cli: &Cli, echo: &[String], threads: usize) -> Result<()> {
    let started = now();
    let out_dir = match &cli.command {
        Command::Simulate(a) | Command::Rates(a) => &a.out,
        Command::Transport(a) => &a.out,
        Command::Diagnose(a) => &a.out,
    };
    let mut outputs = Outputs::open(out_dir)?;
    let result = match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &mut outputs),
        Command::Rates(a) => cmd_rates(a, &mut outputs),
        Command::Transport(a) => cmd_transport(a, &mut outputs),
        Command::Diagnose(a) => cmd_diagnose(a, &mut outputs),
    };
    let finish = |(config, seed): (Value, Option<u64>), outputs: &mut Outputs| -> Result<()> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            git: option_env!("LANDAU_GIT_DESCRIBE").unwrap_or("unknown").into(),
            command: command_name(&cli.command).into(),
            args: echo.to_vec(),
            config,
            seed,
            threads,
            started: started.clone(),
            finished: now(),
            outputs: outputs.checksums()?,
        };
        let path = outputs.dir.join(MANIFEST_FILE);
        let text = serde_json::to_vec_pretty(&manifest)?;
        fs::write(&path, text).map_err(|e| LandauError::io(&path, e))
    };
    match result.and_then(|echo| finish(echo, &mut outputs)) {
        Ok(()) => Ok(()),
        Err(e) => {
            outputs.discard();
            Err(e)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Rates(_) => "rates",
        Command::Transport(_) => "transport",
        Command::Diagnose(_) => "diagnose",
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, Value)> {
    let text = fs::read_to_string(path).map_err(|e| LandauError::io(path, e))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| LandauError::config(path.display().to_string(), e.to_string()))?;
    let parsed = serde_json::from_value(value.clone()).map_err(|e| LandauError::config("config", e.to_string()))?;
    Ok((parsed, value))
}

fn cmd_simulate(args: &RunArgs, out: &mut Outputs) -> Result<(Value, Option<u64>)> {
    let (mut cfg, _): (SimConfig, Value) = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let mut moments = MomentReport::new(cfg.dim);
    let mut snaps = SnapshotWriter::create(&out.path("snapshots.csv"), cfg.dim)?;
    simulate(&cfg, &mut [&mut snaps, &mut moments])?;
    snaps.finish()?;
    let mut csv = Vec::new();
    moments.write_csv(&mut csv)?;
    out.write("moments.csv", &csv)?;
    Ok((serde_json::to_value(&cfg)?, Some(cfg.seed)))
}

fn cmd_rates(args: &RunArgs, out: &mut Outputs) -> Result<(Value, Option<u64>)> {
    let (mut spec, _): (ExperimentSpec, Value) = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        spec.base.seed = seed;
    }
    match spec.kind {
        ExperimentKind::EmpiricalRate | ExperimentKind::SelfConvergence => {
            let report = if spec.kind == ExperimentKind::EmpiricalRate {
                empirical_rate(&spec)?
            } else {
                self_convergence(&spec)?
            };
            out.write("rate_report.json", &serde_json::to_vec_pretty(&report)?)?;
            let mut csv = Vec::new();
            report.write_replica_csv(&mut csv)?;
            out.write("rate_replicas.csv", &csv)?;
        }
        ExperimentKind::SigmaInvariance => {
            let report = sigma_invariance(&spec)?;
            out.write("invariance_report.json", &serde_json::to_vec_pretty(&report)?)?;
        }
    }
    Ok((serde_json::to_value(&spec)?, Some(spec.base.seed)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransportConfig {
    mu: PathBuf,
    nu: PathBuf,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiagnoseConfig {
    snapshots: PathBuf,
    #[serde(default)]
    window: Option<(f64, f64)>,
}

fn relative_to(config: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        config.parent().map_or(p.clone(), |d| d.join(&p))
    }
}

fn cmd_transport(args: &TransportArgs, out: &mut Outputs) -> Result<(Value, Option<u64>)> {
    let (mu_path, nu_path) = match (&args.config, &args.mu, &args.nu) {
        (None, Some(mu), Some(nu)) => (mu.clone(), nu.clone()),
        (Some(cfg), None, None) => {
            let (c, _): (TransportConfig, Value) = read_json(cfg)?;
            (relative_to(cfg, c.mu), relative_to(cfg, c.nu))
        }
        _ => return Err(LandauError::config("mu/nu", "give either --config or both --mu and --nu")),
    };
    let mu = EmpiricalMeasure::read_csv(&mu_path)?;
    let nu = EmpiricalMeasure::read_csv(&nu_path)?;
    let plan = w2_general(&mu, &nu)?;
    plan.validate(&mu, &nu)?;
    let verdict = is_cyclically_monotone(&plan, &mu, &nu)?;
    plan.write_csv(&out.path("plan.csv"))?;
    let certificate = match &verdict {
        MonotonicityVerdict::Monotone { method } => json!({"cyclically_monotone": true, "method": format!("{method:?}")}),
        MonotonicityVerdict::Violated { cycle, gain } => {
            json!({"cyclically_monotone": false, "witness": cycle, "gain": gain})
        }
        MonotonicityVerdict::Undecided { max_len, support } => {
            json!({"cyclically_monotone": null, "undecided_at_length": max_len, "support": support})
        }
    };
    let summary = json!({
        "mu": {"path": mu_path.display().to_string(), "atoms": mu.len(), "dim": mu.dim()},
        "nu": {"path": nu_path.display().to_string(), "atoms": nu.len(), "dim": nu.dim()},
        "cost": plan.cost,
        "w2": plan.cost.sqrt(),
        "support": plan.support_len(),
        "certificate": certificate,
    });
    out.write("transport.json", &serde_json::to_vec_pretty(&summary)?)?;
    Ok((json!({"mu": mu_path, "nu": nu_path}), None))
}

fn cmd_diagnose(args: &DiagnoseArgs, out: &mut Outputs) -> Result<(Value, Option<u64>)> {
    let (path, window) = match (&args.config, &args.snapshots) {
        (None, Some(s)) => (s.clone(), args.window.as_ref().map(|w| (w[0], w[1]))),
        (Some(cfg), None) => {
            let (c, _): (DiagnoseConfig, Value) = read_json(cfg)?;
            (relative_to(cfg, c.snapshots), c.window)
        }
        _ => return Err(LandauError::config("snapshots", "give either --config or --snapshots")),
    };
    let snaps = read_snapshots(&path)?;
    if snaps.is_empty() {
        return Err(LandauError::Measure("snapshot file holds no rows".into()));
    }
    let mut report = MomentReport::new(snaps[0].dim());
    for s in &snaps {
        report.record(s);
    }
    let drift = conservation_drift(&report)?;
    let window = window.unwrap_or((report.times[0], *report.times.last().expect("non-empty")));
    let fit = match fit_anisotropy_decay(&report, window) {
        Ok(f) => json!(f),
        Err(e) => json!({"skipped": e.to_string()}),
    };
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.write("moments.csv", &csv)?;
    let summary = json!({
        "snapshots": snaps.len(),
        "particles": snaps[0].n(),
        "dim": snaps[0].dim(),
        "conservation": drift,
        "anisotropy_decay": fit,
    });
    out.write("diagnostics.json", &serde_json::to_vec_pretty(&summary)?)?;
    Ok((json!({"snapshots": path, "window": window}), None))
}
