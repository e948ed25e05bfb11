//! Simulation and analysis engine for cohort stepped-wedge cluster randomized
//! trials.
//!
//! The crate covers the full pipeline:
//!
//! - [`design`]: stepped-wedge layouts (which cluster crosses over when) and
//!   allocation randomization.
//! - [`cohort`]: participant panels — ages, widowhood trajectories, and open
//!   cohorts with attrition and replacement.
//! - [`outcome`]: the data-generating model that turns a panel into an
//!   analysis-ready observation table.
//! - [`modelspec`]: the six analysis-model formulations and their design
//!   matrices.
//! - [`lmm`]: REML estimation of the two-random-intercept linear mixed model
//!   via a structured solver that never materializes the N x N covariance.
//! - [`inference`]: Satterthwaite degrees of freedom and Wald t-tests.
//! - [`harness`]: deterministic, parallel Monte Carlo replication and
//!   summaries (bias, empirical SD, power).
//!
//! Everything downstream of a seed is deterministic: random draws come from
//! keyed sub-streams (see [`rng`]), so results do not depend on iteration
//! order or worker count.

pub mod cohort;
pub mod design;
pub mod error;
pub mod harness;
pub mod inference;
pub mod lmm;
pub mod modelspec;
pub mod optim;
pub mod outcome;
pub mod rng;
pub mod tdist;

pub use error::{Error, Result};

/// Version of the engine, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
