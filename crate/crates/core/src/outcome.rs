//! The data-generating outcome model and the analysis-ready observation
//! table.
//!
//! For participant `k` of cluster `i` observed in period `j`:
//!
//! ```text
//! y = intercept + c_i + d_ik + theta * x_ij + f_age(age) +
//!     widowed_effect * widowed + trend_j + e_ijk
//! ```
//!
//! with `c_i`, `d_ik`, `e_ijk` independent centered Gaussians (cluster,
//! participant, and residual variance), `x_ij` the design's exposure
//! indicator, and `f_age` either linear or linear-plus-quadratic. Random
//! effects are drawn once per cluster / participant from keyed sub-streams,
//! residuals per observation in period order.

use std::fmt::Write as _;
use std::io::Write;

use rand_distr::{Distribution, Normal};

use crate::cohort::{
    generate_closed_cohort, generate_open_cohort, CohortMode, CohortPanel,
};
use crate::design::TrialDesign;
use crate::error::{Error, Result};
use crate::rng::{purpose, StreamFactory};

/// Secular-trend points per period for the trend scenarios, in outcome units.
/// Trials with fewer steps use the leading `J + 1` entries.
pub const DEFAULT_SECULAR_TREND: [f64; 9] = [0.0, 0.0, -4.0, -4.0, -4.0, -5.0, -5.0, -5.0, -6.0];

/// Functional form of the age effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgeResponse {
    /// `age_effect * age`.
    Linear,
    /// `age_effect * age - curvature * max(age - center, 0)^2`: the decline
    /// steepens quadratically once age passes `center`, so a straight line in
    /// age systematically misstates how fast the oldest participants decline.
    Quadratic { curvature: f64, center: f64 },
}

impl AgeResponse {
    pub fn evaluate(&self, age_effect: f64, age: f64) -> f64 {
        match *self {
            AgeResponse::Linear => age_effect * age,
            AgeResponse::Quadratic { curvature, center } => {
                age_effect * age - curvature * (age - center).max(0.0).powi(2)
            }
        }
    }
}

/// Everything that parameterizes data generation for one scenario cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    /// Short name carried into result records (e.g. "a".."d").
    pub label: String,
    pub intercept: f64,
    /// The intervention effect theta.
    pub intervention_effect: f64,
    pub age_effect: f64,
    pub widowed_effect: f64,
    /// Per-period secular trend; must cover every period and start at 0.
    pub secular_trend: Vec<f64>,
    pub age_response: AgeResponse,
    pub var_cluster: f64,
    pub var_participant: f64,
    pub var_residual: f64,
    pub cohort: CohortMode,
    pub cluster_size: usize,
    pub widowhood_hazard: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            label: "custom".into(),
            intercept: 70.0,
            intervention_effect: 0.0,
            age_effect: -0.25,
            widowed_effect: -5.0,
            secular_trend: DEFAULT_SECULAR_TREND.to_vec(),
            age_response: AgeResponse::Linear,
            var_cluster: 10.0,
            var_participant: 10.0,
            var_residual: 20.0,
            cohort: CohortMode::Closed,
            cluster_size: 8,
            widowhood_hazard: 0.05,
        }
    }
}

/// Default curvature of the quadratic age response used by the nonlinear
/// scenario. Strong enough that a model adjusting for age linearly picks up
/// a clearly detectable intervention-effect bias.
pub const DEFAULT_AGE_CURVATURE: f64 = 0.01;
/// Age beyond which the quadratic age response steepens.
pub const DEFAULT_AGE_CENTER: f64 = 60.0;

/// The four study scenarios:
///
/// - `a`: linear age + widowhood effects, no secular trend, closed cohort;
/// - `b`: as `a` but with a quadratic age response;
/// - `c`: as `a` plus the default secular trend;
/// - `d`: as `c` with an open cohort (15% attrition per period).
pub fn scenario_preset(name: char, theta: f64, n_steps: usize) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig {
        label: name.to_string(),
        intervention_effect: theta,
        secular_trend: vec![0.0; n_steps + 1],
        ..ScenarioConfig::default()
    };
    match name {
        'a' => {}
        'b' => {
            cfg.age_response = AgeResponse::Quadratic {
                curvature: DEFAULT_AGE_CURVATURE,
                center: DEFAULT_AGE_CENTER,
            };
        }
        'c' | 'd' => {
            if n_steps + 1 > DEFAULT_SECULAR_TREND.len() {
                return Err(Error::InvalidScenario(format!(
                    "the default secular trend covers {} periods, trial has {}",
                    DEFAULT_SECULAR_TREND.len(),
                    n_steps + 1
                )));
            }
            cfg.secular_trend = DEFAULT_SECULAR_TREND[..=n_steps].to_vec();
            if name == 'd' {
                cfg.cohort = CohortMode::Open {
                    attrition_rate: 0.15,
                };
            }
        }
        other => {
            return Err(Error::InvalidScenario(format!(
                "unknown scenario '{other}' (expected a, b, c, or d)"
            )));
        }
    }
    Ok(cfg)
}

impl ScenarioConfig {
    /// Checks the configuration against a design, collecting every problem.
    pub fn validate(&self, design: &TrialDesign) -> Result<()> {
        let mut problems = Vec::new();
        for (name, v) in [
            ("cluster", self.var_cluster),
            ("participant", self.var_participant),
            ("residual", self.var_residual),
        ] {
            if !v.is_finite() || v < 0.0 {
                problems.push(format!("{name} variance must be nonnegative, got {v}"));
            }
        }
        if self.secular_trend.len() < design.n_periods() {
            problems.push(format!(
                "secular trend has {} entries, trial has {} periods",
                self.secular_trend.len(),
                design.n_periods()
            ));
        } else if self.secular_trend[0] != 0.0 {
            problems.push(format!(
                "secular trend must be 0 at baseline, got {}",
                self.secular_trend[0]
            ));
        }
        if let AgeResponse::Quadratic { curvature, center } = self.age_response {
            if !curvature.is_finite() || !center.is_finite() {
                problems.push("quadratic age response parameters must be finite".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidScenario(problems.join("; ")))
        }
    }

    /// Generates the cohort panel this scenario calls for.
    pub fn generate_panel(
        &self,
        design: &TrialDesign,
        streams: &StreamFactory,
    ) -> Result<CohortPanel> {
        match self.cohort {
            CohortMode::Closed => {
                generate_closed_cohort(design, self.cluster_size, self.widowhood_hazard, streams)
            }
            CohortMode::Open { attrition_rate } => generate_open_cohort(
                design,
                self.cluster_size,
                self.widowhood_hazard,
                attrition_rate,
                streams,
            ),
        }
    }
}

/// One observation row of the analysis dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsRow {
    pub cluster: usize,
    pub period: usize,
    pub participant: usize,
    pub exposed: bool,
    pub age: f64,
    /// Age at the participant's own entry period.
    pub baseline_age: f64,
    pub widowed: bool,
    /// Widowhood state at the participant's own entry period.
    pub baseline_widowed: bool,
    pub outcome: f64,
}

/// The analysis dataset: one row per (cluster, period, participant) actually
/// observed, sorted by cluster, then period, then participant.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    pub rows: Vec<ObsRow>,
    /// Number of steps `J` (periods run `0..=J`).
    pub n_steps: usize,
    pub n_clusters: usize,
}

/// Draws outcomes for every observed (participant, period) pair of a panel.
pub fn generate_outcomes(
    panel: &CohortPanel,
    config: &ScenarioConfig,
    streams: &StreamFactory,
) -> Result<ObservationTable> {
    config.validate(&panel.design)?;
    let design = &panel.design;
    let sd_cluster = config.var_cluster.sqrt();
    let sd_participant = config.var_participant.sqrt();
    let sd_residual = config.var_residual.sqrt();

    // Cluster effects are drawn once per cluster regardless of panel makeup.
    let cluster_effects: Vec<f64> = (1..=design.n_clusters())
        .map(|i| {
            draw_normal(
                sd_cluster,
                &mut streams.stream(&[i as u64, purpose::CLUSTER_EFFECT]),
            )
        })
        .collect();

    let mut rows = Vec::new();
    for t in &panel.trajectories {
        let c_i = cluster_effects[t.cluster - 1];
        let d_ik = draw_normal(
            sd_participant,
            &mut streams.stream(&[
                t.cluster as u64,
                t.participant as u64,
                purpose::PARTICIPANT_EFFECT,
            ]),
        );
        let mut residuals = streams.stream(&[
            t.cluster as u64,
            t.participant as u64,
            purpose::RESIDUAL,
        ]);
        for (offset, (&age, &widowed)) in t.ages.iter().zip(&t.widowed).enumerate() {
            let period = t.entry_period + offset;
            let exposed = design.exposed(t.cluster, period);
            let e = draw_normal(sd_residual, &mut residuals);
            let outcome = config.intercept
                + c_i
                + d_ik
                + config.intervention_effect * f64::from(exposed)
                + config.age_response.evaluate(config.age_effect, age)
                + config.widowed_effect * f64::from(widowed)
                + config.secular_trend[period]
                + e;
            rows.push(ObsRow {
                cluster: t.cluster,
                period,
                participant: t.participant,
                exposed,
                age,
                baseline_age: t.ages[0],
                widowed,
                baseline_widowed: t.widowed[0],
                outcome,
            });
        }
    }
    rows.sort_by_key(|r| (r.cluster, r.period, r.participant));
    Ok(ObservationTable {
        rows,
        n_steps: design.n_steps(),
        n_clusters: design.n_clusters(),
    })
}

fn draw_normal(sd: f64, rng: &mut impl rand::Rng) -> f64 {
    if sd > 0.0 {
        Normal::new(0.0, sd).unwrap().sample(rng)
    } else {
        0.0
    }
}

const CSV_HEADER: &str =
    "cluster,period,participant,exposed,age,baseline_age,widowed,baseline_widowed,outcome";

impl ObservationTable {
    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    /// Writes the table as CSV (UTF-8, `.` decimal separator).
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        let mut buf = String::new();
        buf.push_str(CSV_HEADER);
        buf.push('\n');
        for r in &self.rows {
            writeln!(
                &mut buf,
                "{},{},{},{},{},{},{},{},{}",
                r.cluster,
                r.period,
                r.participant,
                u8::from(r.exposed),
                r.age,
                r.baseline_age,
                u8::from(r.widowed),
                u8::from(r.baseline_widowed),
                r.outcome
            )
            .expect("writing to a String cannot fail");
        }
        w.write_all(buf.as_bytes())?;
        Ok(())
    }

    /// Parses a table written by [`ObservationTable::write_csv`]. Errors
    /// carry 1-based line numbers (the header is line 1).
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == CSV_HEADER => {}
            Some((_, h)) => {
                return Err(Error::CsvParse {
                    line: 1,
                    message: format!("expected header '{CSV_HEADER}', got '{h}'"),
                });
            }
            None => {
                return Err(Error::CsvParse {
                    line: 1,
                    message: "empty input".into(),
                });
            }
        }
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 9 {
                return Err(Error::CsvParse {
                    line: line_no,
                    message: format!("expected 9 fields, got {}", fields.len()),
                });
            }
            let parse_usize = |s: &str, what: &str| -> Result<usize> {
                s.trim().parse().map_err(|_| Error::CsvParse {
                    line: line_no,
                    message: format!("invalid {what}: '{s}'"),
                })
            };
            let parse_f64 = |s: &str, what: &str| -> Result<f64> {
                let v: f64 = s.trim().parse().map_err(|_| Error::CsvParse {
                    line: line_no,
                    message: format!("invalid {what}: '{s}'"),
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::CsvParse {
                        line: line_no,
                        message: format!("non-finite {what}: '{s}'"),
                    })
                }
            };
            let parse_flag = |s: &str, what: &str| -> Result<bool> {
                match s.trim() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    _ => Err(Error::CsvParse {
                        line: line_no,
                        message: format!("invalid {what} (expected 0 or 1): '{s}'"),
                    }),
                }
            };
            let cluster = parse_usize(fields[0], "cluster")?;
            let participant = parse_usize(fields[2], "participant")?;
            if cluster == 0 || participant == 0 {
                return Err(Error::CsvParse {
                    line: line_no,
                    message: "cluster and participant ids are 1-based".into(),
                });
            }
            rows.push(ObsRow {
                cluster,
                period: parse_usize(fields[1], "period")?,
                participant,
                exposed: parse_flag(fields[3], "exposed")?,
                age: parse_f64(fields[4], "age")?,
                baseline_age: parse_f64(fields[5], "baseline_age")?,
                widowed: parse_flag(fields[6], "widowed")?,
                baseline_widowed: parse_flag(fields[7], "baseline_widowed")?,
                outcome: parse_f64(fields[8], "outcome")?,
            });
        }
        let n_steps = rows.iter().map(|r| r.period).max().unwrap_or(0);
        let n_clusters = rows.iter().map(|r| r.cluster).max().unwrap_or(0);
        Ok(ObservationTable {
            rows,
            n_steps,
            n_clusters,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design48x4() -> TrialDesign {
        TrialDesign::standard(48, 4, 0.5).unwrap()
    }

    fn zero_noise_config() -> ScenarioConfig {
        ScenarioConfig {
            intervention_effect: 1.0,
            age_effect: 0.0,
            widowed_effect: 0.0,
            secular_trend: vec![0.0; 5],
            var_cluster: 0.0,
            var_participant: 0.0,
            var_residual: 0.0,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn zero_variance_outcomes_are_exact() {
        let d = design48x4();
        let f = StreamFactory::new(1);
        let cfg = zero_noise_config();
        let panel = cfg.generate_panel(&d, &f).unwrap();
        let table = generate_outcomes(&panel, &cfg, &f).unwrap();
        assert_eq!(table.n_obs(), 48 * 8 * 5);
        for r in &table.rows {
            let expected = 70.0 + f64::from(r.exposed);
            assert_eq!(r.outcome, expected);
            assert_eq!(r.exposed, d.exposed(r.cluster, r.period));
        }
    }

    #[test]
    fn secular_trend_shifts_periods_exactly() {
        let d = design48x4();
        let f = StreamFactory::new(2);
        let mut cfg = zero_noise_config();
        cfg.intervention_effect = 0.0;
        cfg.secular_trend = vec![0.0, 0.0, -4.0, -4.0, -4.0];
        let panel = cfg.generate_panel(&d, &f).unwrap();
        let table = generate_outcomes(&panel, &cfg, &f).unwrap();
        for r in &table.rows {
            assert_eq!(r.outcome, 70.0 + cfg.secular_trend[r.period]);
        }
    }

    #[test]
    fn variance_components_decompose() {
        // One period only (J = 1 truncated to baseline contributions would
        // still mix; instead use many clusters/participants and decompose
        // empirically over the baseline period).
        let d = TrialDesign::standard(500, 2, 0.5).unwrap();
        let f = StreamFactory::new(3);
        let cfg = ScenarioConfig {
            age_effect: 0.0,
            widowed_effect: 0.0,
            secular_trend: vec![0.0; 3],
            cluster_size: 40,
            ..ScenarioConfig::default()
        };
        let panel = cfg.generate_panel(&d, &f).unwrap();
        let table = generate_outcomes(&panel, &cfg, &f).unwrap();

        // Baseline rows: y = 70 + c_i + d_ik + e. Total variance 40,
        // cluster-mean variance ~ 10 + (10 + 20)/40.
        let base: Vec<&ObsRow> = table.rows.iter().filter(|r| r.period == 0).collect();
        let n = base.len() as f64;
        let mean = base.iter().map(|r| r.outcome).sum::<f64>() / n;
        let total_var =
            base.iter().map(|r| (r.outcome - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(
            (total_var - 40.0).abs() < 2.0,
            "total variance {total_var}, expected 40"
        );

        let mut cluster_means = vec![0.0; 500];
        for r in &base {
            cluster_means[r.cluster - 1] += r.outcome / 40.0;
        }
        let cm = cluster_means.iter().sum::<f64>() / 500.0;
        let between = cluster_means.iter().map(|m| (m - cm).powi(2)).sum::<f64>() / 499.0;
        let expected_between = 10.0 + 30.0 / 40.0;
        assert!(
            (between - expected_between).abs() < 1.5,
            "between-cluster variance {between}, expected {expected_between}"
        );
    }

    #[test]
    fn presets_match_their_definitions() {
        let a = scenario_preset('a', 0.5, 4).unwrap();
        assert_eq!(a.secular_trend, vec![0.0; 5]);
        assert_eq!(a.age_response, AgeResponse::Linear);
        assert_eq!(a.cohort, CohortMode::Closed);
        assert_eq!(a.intervention_effect, 0.5);

        let b = scenario_preset('b', 0.0, 4).unwrap();
        assert!(matches!(b.age_response, AgeResponse::Quadratic { .. }));

        let c = scenario_preset('c', 1.0, 4).unwrap();
        assert_eq!(c.secular_trend, vec![0.0, 0.0, -4.0, -4.0, -4.0]);
        assert_eq!(c.cohort, CohortMode::Closed);

        let c8 = scenario_preset('c', 1.0, 8).unwrap();
        assert_eq!(c8.secular_trend.len(), 9);
        assert_eq!(c8.secular_trend[8], -6.0);

        let d = scenario_preset('d', 1.0, 4).unwrap();
        assert_eq!(
            d.cohort,
            CohortMode::Open {
                attrition_rate: 0.15
            }
        );

        assert!(scenario_preset('e', 0.0, 4).is_err());
        assert!(scenario_preset('c', 0.0, 9).is_err());
    }

    #[test]
    fn quadratic_age_response_evaluates() {
        let r = AgeResponse::Quadratic {
            curvature: 0.004,
            center: 60.0,
        };
        // Below the center the response is purely linear.
        assert_eq!(r.evaluate(-0.25, 40.0), -10.0);
        assert_eq!(r.evaluate(-0.25, 60.0), -15.0);
        // Above it the quadratic term kicks in.
        let at80 = r.evaluate(-0.25, 80.0);
        assert!((at80 - (-20.0 - 0.004 * 400.0)).abs() < 1e-12);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let d = design48x4();
        let f = StreamFactory::new(4);
        let mut cfg = ScenarioConfig::default();
        cfg.var_cluster = -1.0;
        let panel = ScenarioConfig::default().generate_panel(&d, &f).unwrap();
        assert!(matches!(
            generate_outcomes(&panel, &cfg, &f),
            Err(Error::InvalidScenario(_))
        ));

        let mut short = ScenarioConfig::default();
        short.secular_trend = vec![0.0, 1.0];
        assert!(generate_outcomes(&panel, &short, &f).is_err());

        let mut nonzero_base = ScenarioConfig::default();
        nonzero_base.secular_trend = vec![1.0; 5];
        assert!(generate_outcomes(&panel, &nonzero_base, &f).is_err());
    }

    #[test]
    fn same_seed_reproduces_and_theta_shifts_only_exposed_rows() {
        let d = design48x4();
        let f = StreamFactory::new(5);
        let cfg0 = ScenarioConfig {
            intervention_effect: 0.0,
            ..ScenarioConfig::default()
        };
        let cfg1 = ScenarioConfig {
            intervention_effect: 0.75,
            ..ScenarioConfig::default()
        };
        let panel = cfg0.generate_panel(&d, &f).unwrap();
        let t0 = generate_outcomes(&panel, &cfg0, &f).unwrap();
        let t0_again = generate_outcomes(&panel, &cfg0, &f).unwrap();
        assert_eq!(t0, t0_again);

        let t1 = generate_outcomes(&panel, &cfg1, &f).unwrap();
        for (a, b) in t0.rows.iter().zip(&t1.rows) {
            if a.exposed {
                assert!((b.outcome - a.outcome - 0.75).abs() < 1e-12);
            } else {
                assert_eq!(a.outcome, b.outcome);
            }
        }
    }

    #[test]
    fn csv_round_trip() {
        let d = TrialDesign::standard(4, 2, 0.5).unwrap();
        let f = StreamFactory::new(6);
        let cfg = ScenarioConfig {
            cohort: CohortMode::Open {
                attrition_rate: 0.15,
            },
            ..ScenarioConfig::default()
        };
        let panel = cfg.generate_panel(&d, &f).unwrap();
        let table = generate_outcomes(&panel, &cfg, &f).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let parsed = ObservationTable::read_csv(&String::from_utf8(buf).unwrap()).unwrap();
        assert_eq!(parsed, table);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        assert!(matches!(
            ObservationTable::read_csv(""),
            Err(Error::CsvParse { line: 1, .. })
        ));
        assert!(matches!(
            ObservationTable::read_csv("wrong,header\n"),
            Err(Error::CsvParse { line: 1, .. })
        ));
        let text = format!("{CSV_HEADER}\n1,0,1,0,50,50,0,0,70\n1,0,2,9,50,50,0,0,70\n");
        match ObservationTable::read_csv(&text) {
            Err(Error::CsvParse { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("exposed"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let text = format!("{CSV_HEADER}\n1,0,1,0,50,50,0,0\n");
        match ObservationTable::read_csv(&text) {
            Err(Error::CsvParse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("9 fields"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn open_cohort_rows_use_individual_baselines() {
        let d = design48x4();
        let f = StreamFactory::new(7);
        let cfg = ScenarioConfig {
            cohort: CohortMode::Open {
                attrition_rate: 0.15,
            },
            ..ScenarioConfig::default()
        };
        let panel = cfg.generate_panel(&d, &f).unwrap();
        let table = generate_outcomes(&panel, &cfg, &f).unwrap();
        // Each cluster-period has exactly cluster_size rows.
        for period in 0..=4 {
            for cluster in 1..=48 {
                let n = table
                    .rows
                    .iter()
                    .filter(|r| r.cluster == cluster && r.period == period)
                    .count();
                assert_eq!(n, 8);
            }
        }
        // A joiner's baseline_age equals their age in their first observed
        // period, not the trial baseline.
        let mut saw_joiner = false;
        for t in &panel.trajectories {
            if t.entry_period > 0 {
                saw_joiner = true;
                let first = table
                    .rows
                    .iter()
                    .find(|r| {
                        r.cluster == t.cluster
                            && r.participant == t.participant
                            && r.period == t.entry_period
                    })
                    .unwrap();
                assert_eq!(first.baseline_age, first.age);
            }
        }
        assert!(saw_joiner);
    }
}
