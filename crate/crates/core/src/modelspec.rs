//! The six analysis-model formulations and their design matrices.
//!
//! Every formulation regresses the outcome on an intercept and the exposure
//! indicator, with two nested random intercepts (cluster and participant).
//! They differ in how they adjust for time-dependent confounding:
//!
//! | id | extra fixed terms                                   |
//! |----|-----------------------------------------------------|
//! | 1  | none                                                |
//! | 2  | baseline age, baseline widowhood                    |
//! | 3  | current age, current widowhood                      |
//! | 4  | period indicators (period 0 is the reference)       |
//! | 5  | period indicators + baseline age, baseline widowhood|
//! | 6  | period indicators + current age, current widowhood  |

use nalgebra::{DMatrix, DVector};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::outcome::ObservationTable;

/// A fixed-effect term of a formulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedTerm {
    Intercept,
    Exposure,
    /// One indicator column per period `1..=J`; period 0 is the reference.
    PeriodIndicators,
    BaselineAge,
    BaselineWidowed,
    Age,
    Widowed,
}

/// One of the six analysis models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelFormulation {
    pub id: u8,
    pub fixed: Vec<FixedTerm>,
}

impl ModelFormulation {
    pub fn from_id(id: u8) -> Result<Self> {
        use FixedTerm::*;
        let fixed = match id {
            1 => vec![Intercept, Exposure],
            2 => vec![Intercept, Exposure, BaselineAge, BaselineWidowed],
            3 => vec![Intercept, Exposure, Age, Widowed],
            4 => vec![Intercept, Exposure, PeriodIndicators],
            5 => vec![Intercept, Exposure, PeriodIndicators, BaselineAge, BaselineWidowed],
            6 => vec![Intercept, Exposure, PeriodIndicators, Age, Widowed],
            other => {
                return Err(Error::InvalidArgument(format!(
                    "model id must be 1..=6, got {other}"
                )));
            }
        };
        Ok(ModelFormulation { id, fixed })
    }

    pub fn all() -> Vec<ModelFormulation> {
        (1..=6).map(|id| ModelFormulation::from_id(id).unwrap()).collect()
    }
}

/// Design matrices and grouping indices for one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMatrices {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    /// Column names of `x`, in order.
    pub labels: Vec<String>,
    /// Column of `x` holding the exposure effect.
    pub exposure_column: usize,
    /// Per-row dense cluster index, `0..n_clusters`.
    pub cluster_index: Vec<usize>,
    /// Per-row dense participant index, `0..n_participants`; participants are
    /// identified by (cluster, participant id) pairs.
    pub participant_index: Vec<usize>,
    pub n_clusters: usize,
    pub n_participants: usize,
}

impl ModelMatrices {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.x.ncols()
    }
}

/// Builds `y`, `X`, and the grouping indices for `formulation` from a table.
/// Fails if the resulting `X` is rank deficient, naming the offending
/// columns.
pub fn build_matrices(
    table: &ObservationTable,
    formulation: &ModelFormulation,
) -> Result<ModelMatrices> {
    if table.rows.is_empty() {
        return Err(Error::InvalidArgument("empty observation table".into()));
    }
    let n = table.rows.len();
    let n_periods = table.n_steps + 1;

    let mut labels: Vec<String> = Vec::new();
    for term in &formulation.fixed {
        match term {
            FixedTerm::Intercept => labels.push("intercept".into()),
            FixedTerm::Exposure => labels.push("exposure".into()),
            FixedTerm::PeriodIndicators => {
                labels.extend((1..n_periods).map(|j| format!("period_{j}")));
            }
            FixedTerm::BaselineAge => labels.push("baseline_age".into()),
            FixedTerm::BaselineWidowed => labels.push("baseline_widowed".into()),
            FixedTerm::Age => labels.push("age".into()),
            FixedTerm::Widowed => labels.push("widowed".into()),
        }
    }
    let p = labels.len();
    let exposure_column = formulation
        .fixed
        .iter()
        .position(|t| *t == FixedTerm::Exposure)
        .expect("every formulation carries an exposure term");

    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for (row, r) in table.rows.iter().enumerate() {
        y[row] = r.outcome;
        let mut col = 0;
        for term in &formulation.fixed {
            match term {
                FixedTerm::Intercept => {
                    x[(row, col)] = 1.0;
                    col += 1;
                }
                FixedTerm::Exposure => {
                    x[(row, col)] = f64::from(r.exposed);
                    col += 1;
                }
                FixedTerm::PeriodIndicators => {
                    if r.period > 0 {
                        x[(row, col + r.period - 1)] = 1.0;
                    }
                    col += n_periods - 1;
                }
                FixedTerm::BaselineAge => {
                    x[(row, col)] = r.baseline_age;
                    col += 1;
                }
                FixedTerm::BaselineWidowed => {
                    x[(row, col)] = f64::from(r.baseline_widowed);
                    col += 1;
                }
                FixedTerm::Age => {
                    x[(row, col)] = r.age;
                    col += 1;
                }
                FixedTerm::Widowed => {
                    x[(row, col)] = f64::from(r.widowed);
                    col += 1;
                }
            }
        }
        debug_assert_eq!(col, p);
    }

    // Dense grouping indices in first-appearance order (rows are sorted by
    // cluster, so clusters come out 0..n_clusters in id order).
    let mut cluster_map: HashMap<usize, usize> = HashMap::new();
    let mut participant_map: HashMap<(usize, usize), usize> = HashMap::new();
    let mut cluster_index = Vec::with_capacity(n);
    let mut participant_index = Vec::with_capacity(n);
    for r in &table.rows {
        let next = cluster_map.len();
        let ci = *cluster_map.entry(r.cluster).or_insert(next);
        let next = participant_map.len();
        let pi = *participant_map
            .entry((r.cluster, r.participant))
            .or_insert(next);
        cluster_index.push(ci);
        participant_index.push(pi);
    }

    let matrices = ModelMatrices {
        y,
        x,
        labels,
        exposure_column,
        cluster_index,
        participant_index,
        n_clusters: cluster_map.len(),
        n_participants: participant_map.len(),
    };
    check_rank(&matrices)?;
    Ok(matrices)
}

/// Rejects rank-deficient design matrices, naming each column that is (to
/// working precision) a linear combination of the columns before it.
fn check_rank(m: &ModelMatrices) -> Result<()> {
    // Modified Gram-Schmidt with one reorthogonalization pass; a column whose
    // projection residual collapses relative to its own norm is dependent.
    let p = m.n_fixed();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(p);
    let mut columns: Vec<String> = Vec::new();
    for j in 0..p {
        let mut v = m.x.column(j).clone_owned();
        let original_norm = v.norm();
        if original_norm == 0.0 {
            columns.push(m.labels[j].clone());
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        if v.norm() <= 1e-8 * original_norm {
            columns.push(m.labels[j].clone());
        } else {
            let nv = v.norm();
            basis.push(v / nv);
        }
    }
    if !columns.is_empty() {
        columns.sort();
        return Err(Error::RankDeficient { columns });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::TrialDesign;
    use crate::outcome::{generate_outcomes, ScenarioConfig};
    use crate::rng::StreamFactory;

    fn table_48x4() -> ObservationTable {
        let d = TrialDesign::standard(48, 4, 0.5).unwrap();
        let f = StreamFactory::new(1);
        let cfg = ScenarioConfig::default();
        let panel = cfg.generate_panel(&d, &f).unwrap();
        generate_outcomes(&panel, &cfg, &f).unwrap()
    }

    #[test]
    fn column_layouts() {
        let table = table_48x4();

        let m1 = build_matrices(&table, &ModelFormulation::from_id(1).unwrap()).unwrap();
        assert_eq!(m1.labels, vec!["intercept", "exposure"]);
        assert_eq!(m1.exposure_column, 1);

        let m4 = build_matrices(&table, &ModelFormulation::from_id(4).unwrap()).unwrap();
        assert_eq!(
            m4.labels,
            vec!["intercept", "exposure", "period_1", "period_2", "period_3", "period_4"]
        );

        let m6 = build_matrices(&table, &ModelFormulation::from_id(6).unwrap()).unwrap();
        assert_eq!(m6.n_fixed(), 8);
        assert_eq!(
            m6.labels,
            vec![
                "intercept",
                "exposure",
                "period_1",
                "period_2",
                "period_3",
                "period_4",
                "age",
                "widowed"
            ]
        );

        let m2 = build_matrices(&table, &ModelFormulation::from_id(2).unwrap()).unwrap();
        assert_eq!(
            m2.labels,
            vec!["intercept", "exposure", "baseline_age", "baseline_widowed"]
        );

        assert!(ModelFormulation::from_id(0).is_err());
        assert!(ModelFormulation::from_id(7).is_err());
    }

    #[test]
    fn matrix_contents_match_rows() {
        let table = table_48x4();
        let m = build_matrices(&table, &ModelFormulation::from_id(6).unwrap()).unwrap();
        assert_eq!(m.n_obs(), table.n_obs());
        for (row, r) in table.rows.iter().enumerate() {
            assert_eq!(m.y[row], r.outcome);
            assert_eq!(m.x[(row, 0)], 1.0);
            assert_eq!(m.x[(row, 1)], f64::from(r.exposed));
            for j in 1..=4 {
                assert_eq!(m.x[(row, 1 + j)], f64::from(r.period == j));
            }
            assert_eq!(m.x[(row, 6)], r.age);
            assert_eq!(m.x[(row, 7)], f64::from(r.widowed));
        }
        assert_eq!(m.n_clusters, 48);
        assert_eq!(m.n_participants, 48 * 8);
    }

    #[test]
    fn period0_reference_means_no_column_for_baseline() {
        let table = table_48x4();
        let m = build_matrices(&table, &ModelFormulation::from_id(4).unwrap()).unwrap();
        for (row, r) in table.rows.iter().enumerate() {
            if r.period == 0 {
                let dummies: f64 = (2..6).map(|c| m.x[(row, c)]).sum();
                assert_eq!(dummies, 0.0);
            }
        }
    }

    #[test]
    fn participant_indices_distinguish_clusters() {
        let table = table_48x4();
        let m = build_matrices(&table, &ModelFormulation::from_id(1).unwrap()).unwrap();
        // Same participant id in different clusters must map to different
        // dense indices.
        let mut seen: HashMap<usize, (usize, usize)> = HashMap::new();
        for (row, r) in table.rows.iter().enumerate() {
            let dense = m.participant_index[row];
            let key = (r.cluster, r.participant);
            if let Some(prev) = seen.get(&dense) {
                assert_eq!(*prev, key);
            } else {
                seen.insert(dense, key);
            }
        }
        assert_eq!(seen.len(), 48 * 8);
    }

    #[test]
    fn collinear_design_is_rejected_with_column_names() {
        // A 1-cluster, 1-step staircase: the exposure indicator equals the
        // period-1 indicator, so formulation 4 is rank deficient.
        let d = TrialDesign::standard(1, 1, 0.5).unwrap();
        let f = StreamFactory::new(9);
        let cfg = ScenarioConfig {
            cluster_size: 12,
            ..ScenarioConfig::default()
        };
        let panel = cfg.generate_panel(&d, &f).unwrap();
        let table = generate_outcomes(&panel, &cfg, &f).unwrap();
        match build_matrices(&table, &ModelFormulation::from_id(4).unwrap()) {
            Err(Error::RankDeficient { columns }) => {
                assert!(!columns.is_empty());
                for c in &columns {
                    assert!(
                        ["intercept", "exposure", "period_1"].contains(&c.as_str()),
                        "unexpected column {c}"
                    );
                }
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn baseline_terms_equal_current_terms_at_baseline_rows() {
        let table = table_48x4();
        let m2 = build_matrices(&table, &ModelFormulation::from_id(2).unwrap()).unwrap();
        let m3 = build_matrices(&table, &ModelFormulation::from_id(3).unwrap()).unwrap();
        for (row, r) in table.rows.iter().enumerate() {
            if r.period == 0 {
                assert_eq!(m2.x[(row, 2)], m3.x[(row, 2)]);
                assert_eq!(m2.x[(row, 3)], m3.x[(row, 3)]);
            }
        }
    }
}
