//! Command-line front end for the stepped-wedge trial simulation engine:
//! dataset generation, single model fits, full Monte Carlo grids, and
//! summary recomputation.

pub mod commands;
pub mod config;
