//! Run configuration: a single TOML file that fully determines a simulation
//! run. Every population and design parameter has the study's standard value
//! as its default, so a minimal file only names the grid:
//!
//! ```toml
//! scenarios = ["a", "c"]
//! theta = [0.0, 0.5, 1.0]
//! steps = [4, 8]
//! replicates = 1000
//! ```
//!
//! Unknown keys are rejected, and validation reports every problem at once
//! rather than stopping at the first.

use serde::{Deserialize, Serialize};
use swsim_core::design::TrialDesign;
use swsim_core::harness::{GridCell, GridSpec, PopulationOverrides};
use swsim_core::outcome::scenario_preset;

/// Optional overrides of the population parameters, mirroring the fields of
/// the scenario presets. Parameters a scenario does not use are ignored for
/// that scenario (e.g. the attrition rate outside open cohorts).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub age_effect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widowed_effect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_cluster: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_participant: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub var_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widowhood_hazard: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attrition_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub secular_trend: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub age_curvature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub age_center: Option<f64>,
}

impl PopulationSection {
    pub fn to_overrides(&self) -> PopulationOverrides {
        PopulationOverrides {
            intercept: self.intercept,
            age_effect: self.age_effect,
            widowed_effect: self.widowed_effect,
            var_cluster: self.var_cluster,
            var_participant: self.var_participant,
            var_residual: self.var_residual,
            cluster_size: self.cluster_size,
            widowhood_hazard: self.widowhood_hazard,
            attrition_rate: self.attrition_rate,
            secular_trend: self.secular_trend.clone(),
            age_curvature: self.age_curvature,
            age_center: self.age_center,
        }
    }
}

/// A fully resolved simulation request. Defaults cover everything except the
/// grid itself (scenarios, effect sizes, step counts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario names, each one of `a`–`d`.
    #[serde(default)]
    pub scenarios: Vec<char>,
    /// True intervention effects to simulate.
    #[serde(default)]
    pub theta: Vec<f64>,
    /// Numbers of steps (J); each trial has J+1 periods.
    #[serde(default)]
    pub steps: Vec<usize>,
    #[serde(default = "defaults::replicates")]
    pub replicates: usize,
    /// Model formulation ids (1-6) fitted on every replicate.
    #[serde(default = "defaults::models")]
    pub models: Vec<u8>,
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[serde(default = "defaults::workers")]
    pub workers: usize,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::clusters")]
    pub clusters: usize,
    /// Length of one period in years.
    #[serde(default = "defaults::period_length")]
    pub period_length: f64,
    /// Re-randomize the cluster allocation in every replicate.
    #[serde(default = "defaults::randomize_allocation")]
    pub randomize_allocation: bool,
    /// Directory the simulate command writes its outputs into.
    #[serde(default = "defaults::out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub population: PopulationSection,
}

mod defaults {
    pub fn replicates() -> usize {
        1000
    }
    pub fn models() -> Vec<u8> {
        vec![1, 2, 3, 4, 5, 6]
    }
    pub fn seed() -> u64 {
        1
    }
    pub fn workers() -> usize {
        1
    }
    pub fn alpha() -> f64 {
        0.05
    }
    pub fn clusters() -> usize {
        48
    }
    pub fn period_length() -> f64 {
        0.5
    }
    pub fn randomize_allocation() -> bool {
        true
    }
    pub fn out_dir() -> String {
        "results".into()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config parses to defaults")
    }
}

impl RunConfig {
    /// Parses a TOML document, rejecting unknown keys.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Returns every problem with this configuration; an empty list means it
    /// is ready to run.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut push = |p: String| {
            if !problems.contains(&p) {
                problems.push(p);
            }
        };

        if self.scenarios.is_empty() {
            push("scenarios: at least one scenario is required".into());
        }
        if self.theta.is_empty() {
            push("theta: at least one effect size is required".into());
        }
        for &t in &self.theta {
            if !t.is_finite() {
                push(format!("theta: {t} is not a finite number"));
            }
        }
        if self.steps.is_empty() {
            push("steps: at least one step count is required".into());
        }
        if self.replicates == 0 {
            push("replicates: must be at least 1".into());
        }
        if self.models.is_empty() {
            push("models: at least one model id is required".into());
        }
        for &m in &self.models {
            if !(1..=6).contains(&m) {
                push(format!("models: {m} is not a model id (expected 1-6)"));
            }
        }
        let mut seen = Vec::new();
        for &m in &self.models {
            if seen.contains(&m) {
                push(format!("models: {m} is listed twice"));
            }
            seen.push(m);
        }
        if self.workers == 0 {
            push("workers: must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            push(format!(
                "alpha: must be strictly between 0 and 1, got {}",
                self.alpha
            ));
        }
        if !(self.period_length.is_finite() && self.period_length > 0.0) {
            push(format!(
                "period_length: must be positive, got {}",
                self.period_length
            ));
        }
        if let Some(k) = self.population.cluster_size {
            if k == 0 {
                push("population.cluster_size: must be at least 1".into());
            }
        }
        for (name, v) in [
            ("widowhood_hazard", self.population.widowhood_hazard),
            ("attrition_rate", self.population.attrition_rate),
        ] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    push(format!("population.{name}: must lie in [0, 1], got {v}"));
                }
            }
        }

        // Authoritative per-cell checks: build every (scenario, steps)
        // combination exactly as the run would and collect what fails.
        let overrides = self.population.to_overrides();
        for &scenario in &self.scenarios {
            for &n_steps in &self.steps {
                if n_steps == 0 {
                    push("steps: must be at least 1".into());
                    continue;
                }
                let label = format!("scenario '{scenario}' with {n_steps} steps");
                let mut cfg = match scenario_preset(scenario, 0.0, n_steps) {
                    Ok(cfg) => cfg,
                    Err(e) => {
                        push(format!("{label}: {e}"));
                        continue;
                    }
                };
                overrides.apply(&mut cfg);
                let design =
                    match TrialDesign::standard(self.clusters, n_steps, self.period_length) {
                        Ok(d) => d,
                        Err(e) => {
                            push(format!("{label}: {e}"));
                            continue;
                        }
                    };
                if let Err(e) = cfg.validate(&design) {
                    push(format!("{label}: {e}"));
                }
            }
        }
        problems
    }

    /// Expands the configuration into the harness's grid request.
    pub fn grid_spec(&self) -> GridSpec {
        let mut cells = Vec::new();
        for &scenario in &self.scenarios {
            for &theta in &self.theta {
                for &n_steps in &self.steps {
                    cells.push(GridCell {
                        scenario,
                        theta,
                        n_steps,
                    });
                }
            }
        }
        GridSpec {
            master_seed: self.seed,
            replicates: self.replicates,
            cells,
            models: self.models.clone(),
            n_clusters: self.clusters,
            period_length: self.period_length,
            alpha: self.alpha,
            randomize_allocation: self.randomize_allocation,
            workers: self.workers,
            overrides: self.population.to_overrides(),
        }
    }
}
