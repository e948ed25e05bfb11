//! Participant panels: who is in which cluster when, how old they are, and
//! whether they have been widowed.
//!
//! Baseline participants enter at period 0 with ages uniform on [18, 102].
//! Widowhood is an absorbing state: the per-period hazard is also applied
//! once at entry as the initial probability. In an open cohort, a fraction of
//! each cluster leaves at the start of every post-baseline period — always
//! the currently oldest members — and is replaced one-for-one by new joiners
//! (ages uniform on [18, 96]), so the active cluster size never changes.
//!
//! All draws come from sub-streams keyed by (cluster, participant, purpose),
//! so an open cohort with attrition rate 0 reproduces the closed cohort
//! bitwise.

use std::io::Write;

use rand::{Rng, RngExt};

use crate::design::TrialDesign;
use crate::error::{Error, Result};
use crate::rng::{purpose, StreamFactory};

/// Age range at baseline entry, years.
const BASELINE_AGE_RANGE: (f64, f64) = (18.0, 102.0);
/// Age range for mid-trial joiners, years.
const JOINER_AGE_RANGE: (f64, f64) = (18.0, 96.0);

/// Closed cohorts keep everyone for the whole trial; open cohorts lose
/// `attrition_rate` of each cluster per period and replace them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CohortMode {
    Closed,
    Open { attrition_rate: f64 },
}

/// One participant's presence and covariate path.
///
/// `ages[t]` and `widowed[t]` describe period `entry_period + t`; the vectors
/// run through the participant's last observed period.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantTrajectory {
    /// 1-based cluster id.
    pub cluster: usize,
    /// 1-based id, unique within the cluster for the whole trial.
    pub participant: usize,
    pub entry_period: usize,
    /// Last observed period for leavers; `None` for participants observed
    /// through the end.
    pub exit_period: Option<usize>,
    pub ages: Vec<f64>,
    pub widowed: Vec<bool>,
}

impl ParticipantTrajectory {
    /// Last observed period given the trial has `n_steps` steps.
    pub fn last_period(&self, n_steps: usize) -> usize {
        self.exit_period.unwrap_or(n_steps)
    }

    pub fn is_active(&self, period: usize) -> bool {
        period >= self.entry_period && period - self.entry_period < self.ages.len()
    }

    pub fn age_at(&self, period: usize) -> Option<f64> {
        self.is_active(period)
            .then(|| self.ages[period - self.entry_period])
    }

    pub fn widowed_at(&self, period: usize) -> Option<bool> {
        self.is_active(period)
            .then(|| self.widowed[period - self.entry_period])
    }
}

/// A full panel: the design it was generated for plus every trajectory,
/// sorted by (cluster, participant).
#[derive(Debug, Clone, PartialEq)]
pub struct CohortPanel {
    pub design: TrialDesign,
    pub mode: CohortMode,
    pub cluster_size: usize,
    pub widowhood_hazard: f64,
    pub trajectories: Vec<ParticipantTrajectory>,
}

/// Advances the absorbing widowhood state by one period. Also used at entry
/// with `current = false` to draw the initial state.
pub fn advance_widowhood(current: bool, hazard: f64, rng: &mut impl Rng) -> bool {
    current || rng.random::<f64>() < hazard
}

fn check_common(cluster_size: usize, hazard: f64) -> Result<()> {
    if cluster_size == 0 {
        return Err(Error::InvalidScenario(
            "cluster size must be at least 1".into(),
        ));
    }
    if !(0.0..=1.0).contains(&hazard) {
        return Err(Error::InvalidScenario(format!(
            "widowhood hazard must lie in [0, 1], got {hazard}"
        )));
    }
    Ok(())
}

/// Incremental builder for one participant's path.
struct PathState {
    participant: usize,
    entry_period: usize,
    entry_age: f64,
    ages: Vec<f64>,
    widowed: Vec<bool>,
    widow_stream: rand_chacha::ChaCha8Rng,
}

impl PathState {
    fn spawn(
        streams: &StreamFactory,
        cluster: usize,
        participant: usize,
        period: usize,
        age_range: (f64, f64),
        hazard: f64,
    ) -> Self {
        let entry_age = streams
            .stream(&[cluster as u64, participant as u64, purpose::AGE])
            .random_range(age_range.0..age_range.1);
        let mut widow_stream =
            streams.stream(&[cluster as u64, participant as u64, purpose::WIDOWHOOD]);
        let w0 = advance_widowhood(false, hazard, &mut widow_stream);
        PathState {
            participant,
            entry_period: period,
            entry_age,
            ages: vec![entry_age],
            widowed: vec![w0],
            widow_stream,
        }
    }

    /// Age at `period`, assuming the participant is (or were) active then.
    fn age_at(&self, period: usize, period_length: f64) -> f64 {
        self.entry_age + (period - self.entry_period) as f64 * period_length
    }

    fn advance_to(&mut self, period: usize, period_length: f64, hazard: f64) {
        self.ages.push(self.age_at(period, period_length));
        let prev = *self.widowed.last().unwrap();
        self.widowed
            .push(advance_widowhood(prev, hazard, &mut self.widow_stream));
    }

    fn into_trajectory(self, cluster: usize, exit_period: Option<usize>) -> ParticipantTrajectory {
        ParticipantTrajectory {
            cluster,
            participant: self.participant,
            entry_period: self.entry_period,
            exit_period,
            ages: self.ages,
            widowed: self.widowed,
        }
    }
}

/// Generates a closed cohort: every participant enters at baseline and stays.
pub fn generate_closed_cohort(
    design: &TrialDesign,
    cluster_size: usize,
    widowhood_hazard: f64,
    streams: &StreamFactory,
) -> Result<CohortPanel> {
    check_common(cluster_size, widowhood_hazard)?;
    let l = design.period_length();
    let mut trajectories = Vec::with_capacity(design.n_clusters() * cluster_size);
    for cluster in 1..=design.n_clusters() {
        for participant in 1..=cluster_size {
            let mut p = PathState::spawn(
                streams,
                cluster,
                participant,
                0,
                BASELINE_AGE_RANGE,
                widowhood_hazard,
            );
            for period in 1..design.n_periods() {
                p.advance_to(period, l, widowhood_hazard);
            }
            trajectories.push(p.into_trajectory(cluster, None));
        }
    }
    Ok(CohortPanel {
        design: design.clone(),
        mode: CohortMode::Closed,
        cluster_size,
        widowhood_hazard,
        trajectories,
    })
}

/// Number of leavers for one cluster-period: `floor(rate * size)` always,
/// plus one more with probability equal to the fractional part.
fn attrition_count(rate: f64, size: usize, rng: &mut impl Rng) -> usize {
    let expected = rate * size as f64;
    let base = expected.floor();
    let frac = expected - base;
    let extra = rng.random::<f64>() < frac;
    base as usize + usize::from(extra)
}

/// Generates an open cohort: at the start of each post-baseline period the
/// currently oldest members of each cluster exit (ties broken by participant
/// id) and are replaced by the same number of new joiners.
pub fn generate_open_cohort(
    design: &TrialDesign,
    cluster_size: usize,
    widowhood_hazard: f64,
    attrition_rate: f64,
    streams: &StreamFactory,
) -> Result<CohortPanel> {
    check_common(cluster_size, widowhood_hazard)?;
    if !(0.0..1.0).contains(&attrition_rate) {
        return Err(Error::InvalidScenario(format!(
            "attrition rate must lie in [0, 1), got {attrition_rate}"
        )));
    }
    let l = design.period_length();
    let mut trajectories = Vec::new();
    for cluster in 1..=design.n_clusters() {
        let mut active: Vec<PathState> = (1..=cluster_size)
            .map(|participant| {
                PathState::spawn(
                    streams,
                    cluster,
                    participant,
                    0,
                    BASELINE_AGE_RANGE,
                    widowhood_hazard,
                )
            })
            .collect();
        let mut next_id = cluster_size + 1;
        for period in 1..design.n_periods() {
            // Select leavers before anyone's state advances into this period.
            let n_leave = attrition_count(
                attrition_rate,
                active.len(),
                &mut streams.stream(&[cluster as u64, period as u64, purpose::ATTRITION]),
            );
            // Oldest first; ties (same entry age and period) by participant id.
            let mut order: Vec<usize> = (0..active.len()).collect();
            order.sort_by(|&a, &b| {
                let age_a = active[a].age_at(period, l);
                let age_b = active[b].age_at(period, l);
                age_b
                    .partial_cmp(&age_a)
                    .unwrap()
                    .then(active[a].participant.cmp(&active[b].participant))
            });
            let mut leaving: Vec<usize> = order[..n_leave].to_vec();
            leaving.sort_unstable_by(|a, b| b.cmp(a)); // remove from the back
            for idx in leaving {
                let p = active.swap_remove(idx);
                trajectories.push(p.into_trajectory(cluster, Some(period - 1)));
            }
            for p in &mut active {
                p.advance_to(period, l, widowhood_hazard);
            }
            for _ in 0..n_leave {
                active.push(PathState::spawn(
                    streams,
                    cluster,
                    next_id,
                    period,
                    JOINER_AGE_RANGE,
                    widowhood_hazard,
                ));
                next_id += 1;
            }
        }
        for p in active {
            trajectories.push(p.into_trajectory(cluster, None));
        }
    }
    trajectories.sort_by_key(|t| (t.cluster, t.participant));
    Ok(CohortPanel {
        design: design.clone(),
        mode: CohortMode::Open { attrition_rate },
        cluster_size,
        widowhood_hazard,
        trajectories,
    })
}

impl CohortPanel {
    /// Trajectories active during `period`, in (cluster, participant) order.
    pub fn active_at(&self, period: usize) -> impl Iterator<Item = &ParticipantTrajectory> {
        self.trajectories.iter().filter(move |t| t.is_active(period))
    }

    /// Writes the panel as CSV with columns
    /// `cluster,participant,period,age,widowed,active` over the full
    /// rectangular (participant x period) grid. Outside a participant's
    /// observed window, `active` is 0, the age extends the same arithmetic
    /// progression, and widowhood is frozen at the nearest observed value.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "cluster,participant,period,age,widowed,active")?;
        let l = self.design.period_length();
        for t in &self.trajectories {
            for period in 0..self.design.n_periods() {
                let offset = period as f64 - t.entry_period as f64;
                let age = t.ages[0] + offset * l;
                let widowed = if period < t.entry_period {
                    t.widowed[0]
                } else {
                    *t.widowed
                        .get(period - t.entry_period)
                        .unwrap_or_else(|| t.widowed.last().unwrap())
                };
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    t.cluster,
                    t.participant,
                    period,
                    age,
                    u8::from(widowed),
                    u8::from(t.is_active(period)),
                )?;
            }
        }
        Ok(())
    }
}
