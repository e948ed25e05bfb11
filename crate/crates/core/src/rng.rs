//! Keyed random sub-streams.
//!
//! Every stochastic ingredient of a simulated trial (one participant's age,
//! one participant's widowhood path, one cluster's random effect, ...) draws
//! from its own ChaCha stream, seeded by mixing the master seed with a small
//! integer key. Two properties follow:
//!
//! - results are independent of the order in which trajectories are visited,
//!   and of how work is split across threads;
//! - turning a mechanism off (e.g. attrition rate 0) leaves every other
//!   stream untouched, so the remaining draws are bitwise identical.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes. Each value keys an independent stream so that adding or
/// removing draws for one purpose never shifts another.
pub mod purpose {
    /// Entry age of a participant.
    pub const AGE: u64 = 1;
    /// Widowhood trajectory of a participant.
    pub const WIDOWHOOD: u64 = 2;
    /// Per-(cluster, period) attrition count rounding.
    pub const ATTRITION: u64 = 3;
    /// Cluster-level random intercept.
    pub const CLUSTER_EFFECT: u64 = 4;
    /// Participant-level random intercept.
    pub const PARTICIPANT_EFFECT: u64 = 5;
    /// Residual errors of one participant, consumed in period order.
    pub const RESIDUAL: u64 = 6;
    /// Allocation shuffle of a replicate.
    pub const ALLOCATION: u64 = 7;
}

/// SplitMix64 finalizer: a fast 64-bit avalanche.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mixes a seed with a tuple of key parts into a single well-scrambled seed.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ 0x6a09e667f3bcc909);
    for &p in parts {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

/// A factory of keyed sub-streams, wrapping one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    seed: u64,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        StreamFactory { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The sub-stream for `key`. Equal keys give identical streams; distinct
    /// keys give (for all practical purposes) independent ones.
    pub fn stream(&self, key: &[u64]) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(mix(self.seed, key))
    }
}
