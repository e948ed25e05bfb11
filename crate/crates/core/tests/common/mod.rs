//! Shared helpers for integration tests: a brute-force dense REML oracle
//! that materializes the full N x N marginal covariance, plus small random
//! panel builders. The production solver must reproduce these numbers
//! without ever forming anything of size N x N.

use nalgebra::{DMatrix, DVector};
use swsim_core::design::TrialDesign;
use swsim_core::modelspec::{build_matrices, ModelFormulation, ModelMatrices};
use swsim_core::outcome::{generate_outcomes, ScenarioConfig};
use swsim_core::rng::StreamFactory;

/// Dense evaluation of the profiled REML criterion at fixed variance ratios.
pub struct DenseEval {
    pub criterion: f64,
    pub sigma2: f64,
    pub beta: DVector<f64>,
    /// `(X' V^-1 X)^-1`, the unit-variance coefficient covariance.
    pub cov_unit: DMatrix<f64>,
}

/// Brute-force route: build `V = I + gc Zc Zc' + gd Zd Zd'` explicitly,
/// factor it, and evaluate the criterion by the definition.
pub fn dense_reml(m: &ModelMatrices, gamma_c: f64, gamma_d: f64) -> DenseEval {
    let n = m.n_obs();
    let p = m.n_fixed();
    let mut v = DMatrix::zeros(n, n);
    for r in 0..n {
        for s in 0..n {
            let mut val = if r == s { 1.0 } else { 0.0 };
            if m.cluster_index[r] == m.cluster_index[s] {
                val += gamma_c;
            }
            if m.participant_index[r] == m.participant_index[s] {
                val += gamma_d;
            }
            v[(r, s)] = val;
        }
    }
    let chol_v = v.cholesky().expect("V must be positive definite");
    let logdet_v = 2.0 * chol_v.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let vinv_x = chol_v.solve(&m.x);
    let vinv_y = chol_v.solve(&m.y);
    let s = m.x.transpose() * &vinv_x;
    let t = m.x.transpose() * &vinv_y;
    let chol_s = s.cholesky().expect("X'V^-1X must be positive definite");
    let logdet_s = 2.0 * chol_s.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let beta = chol_s.solve(&t);
    let resid = &m.y - &m.x * &beta;
    let vinv_r = chol_v.solve(&resid);
    let rss = resid.dot(&vinv_r);
    let dof = (n - p) as f64;
    let sigma2 = rss / dof;
    let criterion =
        dof * ((2.0 * std::f64::consts::PI).ln() + sigma2.ln()) + logdet_v + logdet_s + rss / sigma2;
    DenseEval {
        criterion,
        sigma2,
        beta,
        cov_unit: chol_s.inverse(),
    }
}

/// Design shapes small enough that the dense route stays cheap (N <= 60),
/// paired with the model ids identifiable on each shape. One-step designs
/// put every cluster in the same group, which makes the exposure column
/// collinear with a period indicator, so they only carry models 1-3.
pub const SMALL_SHAPES: [(usize, usize, usize, &[u8]); 6] = [
    (2, 1, 3, &[1, 2, 3]),
    (4, 2, 2, &[1, 2, 3, 4, 5, 6]),
    (3, 3, 1, &[1, 2, 3, 4, 5, 6]),
    (4, 4, 2, &[1, 2, 3, 4, 5, 6]),
    (6, 2, 3, &[1, 2, 3, 4, 5, 6]),
    (6, 3, 2, &[1, 2, 3, 4, 5, 6]),
];

/// A small random panel and model, deterministic in `seed`. On rare draws a
/// binary column has no variation and the build reports rank deficiency;
/// callers skip such seeds.
pub fn small_panel(seed: u64) -> swsim_core::Result<ModelMatrices> {
    let (i, j, k, models) = SMALL_SHAPES[(seed % SMALL_SHAPES.len() as u64) as usize];
    let model = models[(seed / 7 % models.len() as u64) as usize];
    let design = TrialDesign::standard(i, j, 0.5).unwrap();
    let cfg = ScenarioConfig {
        intervention_effect: 0.4,
        cluster_size: k,
        // Keep widowhood common enough that its column rarely degenerates on
        // tiny panels.
        widowhood_hazard: 0.35,
        ..ScenarioConfig::default()
    };
    let streams = StreamFactory::new(seed);
    let panel = cfg.generate_panel(&design, &streams).unwrap();
    let table = generate_outcomes(&panel, &cfg, &streams).unwrap();
    build_matrices(&table, &ModelFormulation::from_id(model).unwrap())
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
