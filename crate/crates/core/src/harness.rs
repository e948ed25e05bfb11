//! Deterministic Monte Carlo harness: replicate a scenario many times, fit a
//! set of model formulations on every replicate, and summarize bias, spread,
//! and rejection rates of the intervention-effect estimates.
//!
//! Every replicate derives its own seed from the master seed and its grid
//! coordinates, so results do not depend on how work is scheduled: running
//! with one worker or many, or re-running a single cell in isolation,
//! reproduces identical records.

use rayon::prelude::*;

use crate::cohort::CohortMode;
use crate::design::TrialDesign;
use crate::error::{Error, Result};
use crate::inference::wald_t_test;
use crate::lmm::{fit_reml, SolverOptions};
use crate::modelspec::{build_matrices, ModelFormulation};
use crate::outcome::{generate_outcomes, scenario_preset, AgeResponse, ScenarioConfig};
use crate::rng::{mix, purpose, StreamFactory};

/// One cell of the simulation grid: a scenario at one effect size and one
/// number of steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub scenario: char,
    pub theta: f64,
    pub n_steps: usize,
}

/// Optional overrides of the population parameters a scenario preset
/// produces, applied identically to every cell. Scenario-shape parameters
/// only apply where the scenario uses them: the secular trend to scenarios
/// with a trend, the quadratic terms to the nonlinear age response, and the
/// attrition rate to open cohorts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationOverrides {
    pub intercept: Option<f64>,
    pub age_effect: Option<f64>,
    pub widowed_effect: Option<f64>,
    pub var_cluster: Option<f64>,
    pub var_participant: Option<f64>,
    pub var_residual: Option<f64>,
    pub cluster_size: Option<usize>,
    pub widowhood_hazard: Option<f64>,
    pub attrition_rate: Option<f64>,
    pub secular_trend: Option<Vec<f64>>,
    pub age_curvature: Option<f64>,
    pub age_center: Option<f64>,
}

impl PopulationOverrides {
    pub fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(v) = self.intercept {
            cfg.intercept = v;
        }
        if let Some(v) = self.age_effect {
            cfg.age_effect = v;
        }
        if let Some(v) = self.widowed_effect {
            cfg.widowed_effect = v;
        }
        if let Some(v) = self.var_cluster {
            cfg.var_cluster = v;
        }
        if let Some(v) = self.var_participant {
            cfg.var_participant = v;
        }
        if let Some(v) = self.var_residual {
            cfg.var_residual = v;
        }
        if let Some(v) = self.cluster_size {
            cfg.cluster_size = v;
        }
        if let Some(v) = self.widowhood_hazard {
            cfg.widowhood_hazard = v;
        }
        if let Some(v) = self.attrition_rate {
            if let CohortMode::Open { .. } = cfg.cohort {
                cfg.cohort = CohortMode::Open { attrition_rate: v };
            }
        }
        if let Some(trend) = &self.secular_trend {
            if cfg.secular_trend.iter().any(|&b| b != 0.0) {
                cfg.secular_trend = trend.clone();
            }
        }
        if let AgeResponse::Quadratic { curvature, center } = &mut cfg.age_response {
            if let Some(v) = self.age_curvature {
                *curvature = v;
            }
            if let Some(v) = self.age_center {
                *center = v;
            }
        }
    }
}

/// A full simulation request.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub master_seed: u64,
    pub replicates: usize,
    pub cells: Vec<GridCell>,
    /// Model formulation ids (1..=6) fitted on every replicate.
    pub models: Vec<u8>,
    pub n_clusters: usize,
    pub period_length: f64,
    pub alpha: f64,
    /// Re-randomize the cluster-to-group allocation in every replicate.
    pub randomize_allocation: bool,
    pub workers: usize,
    pub overrides: PopulationOverrides,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            master_seed: 1,
            replicates: 1000,
            cells: Vec::new(),
            models: vec![1, 2, 3, 4, 5, 6],
            n_clusters: 48,
            period_length: 0.5,
            alpha: 0.05,
            randomize_allocation: true,
            workers: 1,
            overrides: PopulationOverrides::default(),
        }
    }
}

/// One fitted model on one replicate. The CSV output carries the fields up
/// to `wall_time_ms`; the rest are in-process diagnostics.
#[derive(Debug, Clone)]
pub struct ReplicateRecord {
    pub scenario: char,
    pub theta: f64,
    pub n_steps: usize,
    pub replicate: u64,
    pub model: u8,
    pub estimate: f64,
    pub std_error: f64,
    pub df: f64,
    pub p_value: f64,
    pub significant: bool,
    pub var_cluster: f64,
    pub var_participant: f64,
    pub var_residual: f64,
    pub converged: bool,
    pub wall_time_ms: f64,
    // Diagnostics not written to CSV.
    pub seed: u64,
    pub t_statistic: f64,
    pub df_fallback: bool,
    pub n_obs: usize,
    pub n_evaluations: usize,
}

/// The seed of one replicate, derived from the master seed and the cell
/// coordinates so any subset of the grid reproduces identical data.
pub fn replicate_seed(
    master_seed: u64,
    scenario: char,
    theta: f64,
    n_steps: usize,
    replicate: u64,
) -> u64 {
    mix(
        master_seed,
        &[scenario as u64, theta.to_bits(), n_steps as u64, replicate],
    )
}

/// Runs every requested model on one freshly generated replicate, all on the
/// identical dataset so between-model comparisons are paired. A model whose
/// fit fails is recorded as non-converged rather than aborting the
/// replicate; only data-generation problems abort.
pub fn run_replicate(
    config: &ScenarioConfig,
    design: &TrialDesign,
    models: &[u8],
    seed: u64,
    alpha: f64,
    randomize_allocation: bool,
) -> Result<Vec<ReplicateRecord>> {
    let streams = StreamFactory::new(seed);
    let design = if randomize_allocation {
        let mut rng = streams.stream(&[purpose::ALLOCATION]);
        design.randomize_allocation(&mut rng)
    } else {
        design.clone()
    };
    let panel = config.generate_panel(&design, &streams)?;
    let table = generate_outcomes(&panel, config, &streams)?;

    let mut out = Vec::with_capacity(models.len());
    for &model in models {
        let started = std::time::Instant::now();
        let fitted = ModelFormulation::from_id(model).and_then(|formulation| {
            let matrices = build_matrices(&table, &formulation)?;
            let fit = fit_reml(&matrices, &SolverOptions::default())?;
            let test = wald_t_test(&matrices, &fit, matrices.exposure_column, alpha)?;
            Ok((fit, test))
        });
        let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
        let mut record = ReplicateRecord {
            scenario: char_label(&config.label),
            theta: config.intervention_effect,
            n_steps: design.n_steps(),
            replicate: 0, // filled by the grid runner
            model,
            estimate: f64::NAN,
            std_error: f64::NAN,
            df: f64::NAN,
            p_value: f64::NAN,
            significant: false,
            var_cluster: f64::NAN,
            var_participant: f64::NAN,
            var_residual: f64::NAN,
            converged: false,
            wall_time_ms,
            seed,
            t_statistic: f64::NAN,
            df_fallback: false,
            n_obs: 0,
            n_evaluations: 0,
        };
        if let Ok((fit, test)) = fitted {
            record.estimate = test.estimate;
            record.std_error = test.standard_error;
            record.df = test.df;
            record.p_value = test.p_value;
            record.significant = test.significant;
            record.var_cluster = fit.components.cluster;
            record.var_participant = fit.components.participant;
            record.var_residual = fit.components.residual;
            record.converged = fit.converged;
            record.t_statistic = test.t_statistic;
            record.df_fallback = test.df_fallback;
            record.n_obs = fit.n_obs;
            record.n_evaluations = fit.n_evaluations;
        }
        out.push(record);
    }
    Ok(out)
}

fn char_label(label: &str) -> char {
    label.chars().next().unwrap_or('?')
}

/// Runs the whole grid on `spec.workers` threads and returns all records in
/// canonical order (cell by cell, replicate by replicate, model by model).
pub fn run_grid(spec: &GridSpec) -> Result<Vec<ReplicateRecord>> {
    if spec.cells.is_empty() {
        return Err(Error::InvalidArgument("simulation grid has no cells".into()));
    }
    if spec.replicates == 0 {
        return Err(Error::InvalidArgument("zero replicates requested".into()));
    }
    if spec.models.is_empty() {
        return Err(Error::InvalidArgument("no models requested".into()));
    }
    if spec.workers == 0 {
        return Err(Error::InvalidArgument("need at least one worker".into()));
    }
    // Validate cells and models eagerly so failures surface before any work.
    let mut prepared = Vec::with_capacity(spec.cells.len());
    for cell in &spec.cells {
        let mut config = scenario_preset(cell.scenario, cell.theta, cell.n_steps)?;
        spec.overrides.apply(&mut config);
        let design = TrialDesign::standard(spec.n_clusters, cell.n_steps, spec.period_length)?;
        config.validate(&design)?;
        prepared.push((*cell, config, design));
    }
    for &m in &spec.models {
        ModelFormulation::from_id(m)?;
    }

    let mut work: Vec<(usize, u64)> = Vec::with_capacity(spec.cells.len() * spec.replicates);
    for cell_idx in 0..prepared.len() {
        for rep in 0..spec.replicates {
            work.push((cell_idx, rep as u64));
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let nested: Vec<Vec<ReplicateRecord>> = pool.install(|| {
        work.par_iter()
            .map(|&(cell_idx, rep)| {
                let (cell, config, design) = &prepared[cell_idx];
                let seed =
                    replicate_seed(spec.master_seed, cell.scenario, cell.theta, cell.n_steps, rep);
                let mut records = run_replicate(
                    config,
                    design,
                    &spec.models,
                    seed,
                    spec.alpha,
                    spec.randomize_allocation,
                )?;
                for r in &mut records {
                    r.replicate = rep;
                }
                Ok(records)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut records: Vec<ReplicateRecord> = nested.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        a.scenario
            .cmp(&b.scenario)
            .then(a.theta.total_cmp(&b.theta))
            .then(a.n_steps.cmp(&b.n_steps))
            .then(a.replicate.cmp(&b.replicate))
            .then(a.model.cmp(&b.model))
    });
    Ok(records)
}

/// Monte Carlo summary of one (cell, model) combination.
#[derive(Debug, Clone)]
pub struct CellSummary {
    pub scenario: char,
    pub theta: f64,
    pub n_steps: usize,
    pub model: u8,
    pub n_replicates: usize,
    /// Replicates whose fit converged; all statistics below use only these.
    pub n_converged: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Sample standard deviation of the estimates.
    pub sd_estimate: f64,
    /// Monte Carlo standard error of the mean estimate.
    pub mcse: f64,
    pub mean_std_error: f64,
    /// Share of converged replicates rejecting the null of no effect; the
    /// empirical power (or, at theta = 0, the empirical type I error).
    pub power: f64,
    // Diagnostics not written to CSV.
    pub mean_df: f64,
    pub n_df_fallback: usize,
}

/// Aggregates records into per-(cell, model) summaries, in canonical order.
pub fn summarize(records: &[ReplicateRecord]) -> Vec<CellSummary> {
    use std::collections::BTreeMap;
    // Keys ordered by (scenario, theta bits shifted to sort, steps, model).
    let mut groups: BTreeMap<(char, u64, usize, u8), Vec<&ReplicateRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.scenario, ordered_f64_key(r.theta), r.n_steps, r.model))
            .or_default()
            .push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((scenario, _, n_steps, model), rows) in groups {
        let theta = rows[0].theta;
        let n_replicates = rows.len();
        let converged: Vec<&&ReplicateRecord> = rows.iter().filter(|r| r.converged).collect();
        let n_converged = converged.len();
        let nc = n_converged as f64;
        let (mean_estimate, sd_estimate) = if n_converged > 0 {
            let mean = converged.iter().map(|r| r.estimate).sum::<f64>() / nc;
            let ss = converged
                .iter()
                .map(|r| (r.estimate - mean).powi(2))
                .sum::<f64>();
            let sd = if n_converged > 1 {
                (ss / (nc - 1.0)).sqrt()
            } else {
                0.0
            };
            (mean, sd)
        } else {
            (f64::NAN, f64::NAN)
        };
        let mcse = if n_converged > 1 {
            sd_estimate / nc.sqrt()
        } else {
            f64::NAN
        };
        let mean_of = |f: &dyn Fn(&ReplicateRecord) -> f64| {
            if n_converged > 0 {
                converged.iter().map(|r| f(r)).sum::<f64>() / nc
            } else {
                f64::NAN
            }
        };
        out.push(CellSummary {
            scenario,
            theta,
            n_steps,
            model,
            n_replicates,
            n_converged,
            mean_estimate,
            bias: mean_estimate - theta,
            sd_estimate,
            mcse,
            mean_std_error: mean_of(&|r| r.std_error),
            power: mean_of(&|r| if r.significant { 1.0 } else { 0.0 }),
            mean_df: mean_of(&|r| r.df),
            n_df_fallback: converged.iter().filter(|r| r.df_fallback).count(),
        });
    }
    out
}

/// Total order on f64 grid coordinates for grouping (NaN never appears).
fn ordered_f64_key(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 0 {
        bits | (1 << 63)
    } else {
        !bits
    }
}

/// Formats a float so CSV output is byte-stable and round-trips exactly:
/// the shortest decimal string that parses back to the same f64.
fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        let mut s = format!("{v}");
        if !s.contains('.') && !s.contains('e') && !s.contains("inf") {
            s.push_str(".0");
        }
        s
    }
}

pub const REPLICATES_CSV_HEADER: &str = "scenario,theta,n_steps,replicate,model,estimate,\
std_error,df,p_value,significant,var_cluster,var_participant,var_residual,converged,wall_time_ms";

/// Writes per-replicate records as CSV.
pub fn write_replicates_csv(records: &[ReplicateRecord], w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "{REPLICATES_CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            fmt_f64(r.theta),
            r.n_steps,
            r.replicate,
            r.model,
            fmt_f64(r.estimate),
            fmt_f64(r.std_error),
            fmt_f64(r.df),
            fmt_f64(r.p_value),
            u8::from(r.significant),
            fmt_f64(r.var_cluster),
            fmt_f64(r.var_participant),
            fmt_f64(r.var_residual),
            u8::from(r.converged),
            fmt_f64(r.wall_time_ms),
        )?;
    }
    Ok(())
}

/// Reads records back from the CSV produced by [`write_replicates_csv`].
/// In-process diagnostic fields not present in the CSV come back as their
/// neutral values.
pub fn read_replicates_csv(text: &str) -> Result<Vec<ReplicateRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == REPLICATES_CSV_HEADER => {}
        Some((_, header)) => {
            return Err(Error::CsvParse {
                line: 1,
                message: format!("unexpected header '{header}'"),
            })
        }
        None => {
            return Err(Error::CsvParse {
                line: 1,
                message: "empty input".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(Error::CsvParse {
                line: line_no,
                message: format!("expected 15 fields, found {}", fields.len()),
            });
        }
        let err = |message: String| Error::CsvParse {
            line: line_no,
            message,
        };
        let parse_f64 = |s: &str, name: &str| -> Result<f64> {
            if s == "NA" {
                return Ok(f64::NAN);
            }
            s.parse::<f64>()
                .map_err(|_| err(format!("bad {name} '{s}'")))
        };
        let parse_flag = |s: &str, name: &str| -> Result<bool> {
            match s {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(err(format!("bad {name} '{other}' (expected 0 or 1)"))),
            }
        };
        let scenario = {
            let mut chars = fields[0].chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => return Err(err(format!("bad scenario '{}'", fields[0]))),
            }
        };
        let estimate = parse_f64(fields[5], "estimate")?;
        let std_error = parse_f64(fields[6], "std_error")?;
        out.push(ReplicateRecord {
            scenario,
            theta: parse_f64(fields[1], "theta")?,
            n_steps: fields[2]
                .parse()
                .map_err(|_| err(format!("bad n_steps '{}'", fields[2])))?,
            replicate: fields[3]
                .parse()
                .map_err(|_| err(format!("bad replicate '{}'", fields[3])))?,
            model: fields[4]
                .parse()
                .map_err(|_| err(format!("bad model '{}'", fields[4])))?,
            estimate,
            std_error,
            df: parse_f64(fields[7], "df")?,
            p_value: parse_f64(fields[8], "p_value")?,
            significant: parse_flag(fields[9], "significant")?,
            var_cluster: parse_f64(fields[10], "var_cluster")?,
            var_participant: parse_f64(fields[11], "var_participant")?,
            var_residual: parse_f64(fields[12], "var_residual")?,
            converged: parse_flag(fields[13], "converged")?,
            wall_time_ms: parse_f64(fields[14], "wall_time_ms")?,
            seed: 0,
            t_statistic: estimate / std_error,
            df_fallback: false,
            n_obs: 0,
            n_evaluations: 0,
        });
    }
    Ok(out)
}

pub const SUMMARY_CSV_HEADER: &str = "scenario,theta,n_steps,model,n_replicates,n_converged,\
mean_estimate,bias,mcse,sd_estimate,mean_std_error,power";

/// Writes per-cell summaries as CSV.
pub fn write_summary_csv(summaries: &[CellSummary], w: &mut impl std::io::Write) -> Result<()> {
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for s in summaries {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            s.scenario,
            fmt_f64(s.theta),
            s.n_steps,
            s.model,
            s.n_replicates,
            s.n_converged,
            fmt_f64(s.mean_estimate),
            fmt_f64(s.bias),
            fmt_f64(s.mcse),
            fmt_f64(s.sd_estimate),
            fmt_f64(s.mean_std_error),
            fmt_f64(s.power),
        )?;
    }
    Ok(())
}
