//! Implementations of the four subcommands: `generate`, `fit`, `simulate`,
//! and `summarize`.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use sha2::{Digest, Sha256};

use swsim_core::design::TrialDesign;
use swsim_core::harness::{
    read_replicates_csv, summarize, write_replicates_csv, write_summary_csv, CellSummary,
};
use swsim_core::lmm::{fit_reml, SolverOptions};
use swsim_core::modelspec::{build_matrices, ModelFormulation};
use swsim_core::outcome::{generate_outcomes, scenario_preset, ObservationTable};
use swsim_core::rng::StreamFactory;

use crate::config::RunConfig;

/// Failure of a command, classified for the process exit code: configuration
/// problems exit with 2, runtime problems with 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

fn load_config(path: &Path) -> Result<(RunConfig, String), CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let sha = sha256_hex(&bytes);
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::Config(format!("config {} is not UTF-8", path.display())))?;
    let cfg = RunConfig::from_toml(&text)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    Ok((cfg, sha))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Prints to stdout, treating a closed pipe (e.g. `swsim fit ... | head`) as
/// a clean early exit rather than an error.
fn print_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write as _;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    match w.write_all(text.as_bytes()).and_then(|()| w.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(CliError::Runtime(format!("cannot write to stdout: {e}"))),
    }
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Arguments of the `generate` subcommand.
#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario name (a-d).
    #[arg(long)]
    pub scenario: char,
    /// True intervention effect.
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    /// Number of steps J; the trial has J+1 periods.
    #[arg(long)]
    pub steps: usize,
    /// Number of clusters (default 48, or the config file's value).
    #[arg(long)]
    pub clusters: Option<usize>,
    /// Participants per cluster (default 8, or the config file's value).
    #[arg(long)]
    pub cluster_size: Option<usize>,
    /// Seed for the data-generating streams.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Optional run configuration supplying population overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Generates one dataset for inspection and reports its row count.
pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => load_config(path)?.0,
        None => RunConfig::default(),
    };
    cfg.scenarios = vec![args.scenario];
    cfg.theta = vec![args.theta];
    cfg.steps = vec![args.steps];
    if let Some(c) = args.clusters {
        cfg.clusters = c;
    }
    if let Some(k) = args.cluster_size {
        cfg.population.cluster_size = Some(k);
    }
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(CliError::Config(format!(
            "invalid request:\n  - {}",
            problems.join("\n  - ")
        )));
    }

    let mut scenario_cfg = scenario_preset(args.scenario, args.theta, args.steps)
        .map_err(|e| CliError::Config(e.to_string()))?;
    cfg.population.to_overrides().apply(&mut scenario_cfg);
    let design = TrialDesign::standard(cfg.clusters, args.steps, cfg.period_length)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let streams = StreamFactory::new(args.seed);
    let panel = scenario_cfg
        .generate_panel(&design, &streams)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let table = generate_outcomes(&panel, &scenario_cfg, &streams)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let file = File::create(&args.out).map_err(|e| {
        CliError::Runtime(format!("cannot write {}: {e}", args.out.display()))
    })?;
    let mut out = BufWriter::new(file);
    table
        .write_csv(&mut out)
        .and_then(|()| out.flush().map_err(Into::into))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("wrote {} rows to {}", table.n_obs(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

/// Arguments of the `fit` subcommand.
#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV (as written by `generate`).
    #[arg(long)]
    pub data: PathBuf,
    /// Model formulation id (1-6).
    #[arg(long)]
    pub model: u8,
    /// Significance level of the intervention-effect test.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

/// Fits one model formulation to a dataset and prints the result as JSON.
pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(CliError::Config(format!(
            "alpha must be strictly between 0 and 1, got {}",
            args.alpha
        )));
    }
    let formulation =
        ModelFormulation::from_id(args.model).map_err(|e| CliError::Config(e.to_string()))?;
    let text = fs::read_to_string(&args.data)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", args.data.display())))?;
    let table = ObservationTable::read_csv(&text).map_err(|e| {
        CliError::Runtime(format!("{}: {e}", args.data.display()))
    })?;
    let matrices =
        build_matrices(&table, &formulation).map_err(|e| CliError::Runtime(e.to_string()))?;
    let fit = fit_reml(&matrices, &SolverOptions::default())
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let test = swsim_core::inference::wald_t_test(&matrices, &fit, fit.exposure_column, args.alpha)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let std_errors: Vec<f64> = (0..fit.n_fixed).map(|j| fit.standard_error(j)).collect();
    let report = serde_json::json!({
        "model": args.model,
        "n_obs": fit.n_obs,
        "n_clusters": fit.n_clusters,
        "n_participants": fit.n_participants,
        "labels": fit.labels,
        "estimates": fit.estimates.iter().copied().collect::<Vec<f64>>(),
        "std_errors": std_errors,
        "components": {
            "cluster": fit.components.cluster,
            "participant": fit.components.participant,
            "residual": fit.components.residual,
        },
        "criterion": fit.criterion,
        "converged": fit.converged,
        "n_evaluations": fit.n_evaluations,
        "intervention": {
            "label": test.label,
            "estimate": test.estimate,
            "std_error": test.standard_error,
            "df": test.df,
            "df_fallback": test.df_fallback,
            "t_statistic": test.t_statistic,
            "p_value": test.p_value,
            "significant": test.significant,
            "alpha": test.alpha,
        },
    });
    let json = serde_json::to_string_pretty(&report).expect("fit report serializes");
    print_stdout(&(json + "\n"))
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

/// Arguments of the `simulate` subcommand. Flags override the corresponding
/// config-file fields.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the replicate count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Override the worker count.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Override the fitted model ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub model: Option<Vec<u8>>,
    /// Override the scenarios (comma separated names).
    #[arg(long, value_delimiter = ',')]
    pub scenario: Option<Vec<char>>,
}

#[derive(Debug, serde::Serialize)]
struct Versions {
    engine: &'static str,
    cli: &'static str,
}

/// Provenance record written next to the CSV outputs: enough to reproduce
/// the run (resolved configuration, config-file hash, seed, versions) and to
/// see what it produced.
#[derive(Debug, serde::Serialize)]
struct Manifest<'a> {
    status: &'a str,
    config_sha256: &'a str,
    master_seed: u64,
    versions: Versions,
    wall_time_seconds: f64,
    n_records: usize,
    n_summaries: usize,
    outputs: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    config: &'a RunConfig,
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(&path, json + "\n")
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Runs the configured grid and writes `replicates.csv`, `summary.csv`, and
/// `manifest.json` into the output directory. Exits 0 only when every
/// (cell, model) combination produced at least one converged fit; a failure
/// partway through still leaves a manifest describing what was written.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32, CliError> {
    let started = Instant::now();
    let (mut cfg, config_sha) = load_config(&args.config)?;
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(v) = args.reps {
        cfg.replicates = v;
    }
    if let Some(v) = args.workers {
        cfg.workers = v;
    }
    if let Some(v) = &args.out {
        cfg.out_dir = v.display().to_string();
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = &args.model {
        cfg.models = v.clone();
    }
    if let Some(v) = &args.scenario {
        cfg.scenarios = v.clone();
    }
    let problems = cfg.validate();
    if !problems.is_empty() {
        return Err(CliError::Config(format!(
            "invalid configuration:\n  - {}",
            problems.join("\n  - ")
        )));
    }

    let out_dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut outputs: Vec<String> = Vec::new();
    let result = run_and_write(&cfg, &out_dir, &mut outputs);
    let wall_time_seconds = started.elapsed().as_secs_f64();
    match result {
        Ok(summaries) => {
            let n_records: usize = summaries.iter().map(|s| s.n_replicates).sum();
            let degenerate: Vec<String> = summaries
                .iter()
                .filter(|s| s.n_converged == 0)
                .map(|s| {
                    format!(
                        "scenario {} theta {} steps {} model {}",
                        s.scenario, s.theta, s.n_steps, s.model
                    )
                })
                .collect();
            let status = if degenerate.is_empty() { "ok" } else { "degenerate-cells" };
            write_manifest(
                &out_dir,
                &Manifest {
                    status,
                    config_sha256: &config_sha,
                    master_seed: cfg.seed,
                    versions: versions(),
                    wall_time_seconds,
                    n_records,
                    n_summaries: summaries.len(),
                    outputs: &outputs,
                    error: None,
                    config: &cfg,
                },
            )?;
            println!(
                "wrote {} replicate records and {} summaries to {} ({:.1}s)",
                n_records,
                summaries.len(),
                out_dir.display(),
                wall_time_seconds
            );
            if degenerate.is_empty() {
                Ok(0)
            } else {
                eprintln!(
                    "cells without a single converged fit:\n  - {}",
                    degenerate.join("\n  - ")
                );
                Ok(3)
            }
        }
        Err(e) => {
            let message = e.to_string();
            // Best effort: record what was produced before the failure.
            let _ = write_manifest(
                &out_dir,
                &Manifest {
                    status: "failed",
                    config_sha256: &config_sha,
                    master_seed: cfg.seed,
                    versions: versions(),
                    wall_time_seconds,
                    n_records: 0,
                    n_summaries: 0,
                    outputs: &outputs,
                    error: Some(&message),
                    config: &cfg,
                },
            );
            Err(e)
        }
    }
}

fn versions() -> Versions {
    Versions {
        engine: swsim_core::VERSION,
        cli: env!("CARGO_PKG_VERSION"),
    }
}

fn run_and_write(
    cfg: &RunConfig,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<Vec<CellSummary>, CliError> {
    let records = swsim_core::harness::run_grid(&cfg.grid_spec())
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let replicates_path = out_dir.join("replicates.csv");
    let file = File::create(&replicates_path).map_err(|e| {
        CliError::Runtime(format!("cannot write {}: {e}", replicates_path.display()))
    })?;
    let mut w = BufWriter::new(file);
    write_replicates_csv(&records, &mut w)
        .and_then(|()| w.flush().map_err(Into::into))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    outputs.push(replicates_path.display().to_string());

    let summaries = summarize(&records);
    let summary_path = out_dir.join("summary.csv");
    let file = File::create(&summary_path).map_err(|e| {
        CliError::Runtime(format!("cannot write {}: {e}", summary_path.display()))
    })?;
    let mut w = BufWriter::new(file);
    write_summary_csv(&summaries, &mut w)
        .and_then(|()| w.flush().map_err(Into::into))
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    outputs.push(summary_path.display().to_string());

    Ok(summaries)
}

// ---------------------------------------------------------------------------
// summarize
// ---------------------------------------------------------------------------

/// Arguments of the `summarize` subcommand.
#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Replicate CSV (as written by `simulate`).
    #[arg(long)]
    pub replicates: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Recomputes cell summaries from a replicate CSV.
pub fn cmd_summarize(args: &SummarizeArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.replicates).map_err(|e| {
        CliError::Runtime(format!("cannot read {}: {e}", args.replicates.display()))
    })?;
    let records = read_replicates_csv(&text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", args.replicates.display())))?;
    if records.is_empty() {
        return Err(CliError::Runtime(format!(
            "{} holds no records",
            args.replicates.display()
        )));
    }
    let summaries = summarize(&records);
    match &args.out {
        Some(path) => {
            let file = File::create(path)
                .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            write_summary_csv(&summaries, &mut w)
                .and_then(|()| w.flush().map_err(Into::into))
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        None => {
            let mut buf = Vec::new();
            write_summary_csv(&summaries, &mut buf).map_err(|e| CliError::Runtime(e.to_string()))?;
            print_stdout(&String::from_utf8(buf).expect("summary CSV is UTF-8"))?;
        }
    }
    Ok(())
}
