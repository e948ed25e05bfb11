//! Stepped-wedge trial layouts.
//!
//! A design with `J` steps runs over `J + 1` periods numbered `0..=J`.
//! Period 0 is an all-control baseline; the clusters of group `g` deliver the
//! intervention from period `g` onward (`g` in `1..=J`), and once exposed a
//! cluster stays exposed. Only balanced layouts are supported: the number of
//! clusters must split evenly across the `J` groups.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// A stepped-wedge layout: which cluster crosses over at which period.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDesign {
    n_clusters: usize,
    n_steps: usize,
    period_length: f64,
    /// `allocation[i - 1]` is the group (1..=J) of cluster `i`.
    allocation: Vec<usize>,
}

impl TrialDesign {
    /// The standard balanced stepped-wedge design: clusters in listing order,
    /// the first `I/J` clusters in group 1, the next `I/J` in group 2, and so
    /// on. `period_length` is the length of one period in years.
    pub fn standard(n_clusters: usize, n_steps: usize, period_length: f64) -> Result<Self> {
        if n_clusters == 0 || n_steps == 0 {
            return Err(Error::InvalidDesign(format!(
                "need at least one cluster and one step, got {n_clusters} clusters, {n_steps} steps"
            )));
        }
        if !period_length.is_finite() || period_length <= 0.0 {
            return Err(Error::InvalidDesign(format!(
                "period length must be positive, got {period_length}"
            )));
        }
        if n_clusters % n_steps != 0 {
            return Err(Error::InvalidDesign(format!(
                "{n_clusters} clusters cannot be split evenly across {n_steps} groups"
            )));
        }
        let per_group = n_clusters / n_steps;
        let allocation = (0..n_clusters).map(|i| i / per_group + 1).collect();
        Ok(TrialDesign {
            n_clusters,
            n_steps,
            period_length,
            allocation,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    /// Number of crossover steps `J`.
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of periods, `J + 1` (period 0 is the baseline).
    pub fn n_periods(&self) -> usize {
        self.n_steps + 1
    }

    pub fn period_length(&self) -> f64 {
        self.period_length
    }

    /// The group (1..=J) of a 1-based cluster id.
    pub fn group_of(&self, cluster: usize) -> usize {
        self.allocation[cluster - 1]
    }

    /// Whether `cluster` (1-based) is exposed during `period` (0-based).
    pub fn exposed(&self, cluster: usize, period: usize) -> bool {
        period >= self.group_of(cluster)
    }

    /// Total number of exposed (cluster, period) cells.
    pub fn total_exposed_cells(&self) -> usize {
        (1..=self.n_clusters)
            .map(|i| self.n_steps + 1 - self.group_of(i))
            .sum()
    }

    /// A copy of this design with the cluster-to-group assignment shuffled
    /// uniformly at random. Group sizes are preserved.
    pub fn randomize_allocation(&self, rng: &mut impl Rng) -> TrialDesign {
        let mut out = self.clone();
        out.allocation.shuffle(rng);
        out
    }

    /// Writes the layout as CSV with columns `cluster,group,period,exposed`,
    /// one row per (cluster, period), sorted by cluster then period.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "cluster,group,period,exposed")?;
        for cluster in 1..=self.n_clusters {
            let group = self.group_of(cluster);
            for period in 0..self.n_periods() {
                let exposed = u8::from(self.exposed(cluster, period));
                writeln!(w, "{cluster},{group},{period},{exposed}")?;
            }
        }
        Ok(())
    }
}
