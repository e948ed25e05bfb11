//! REML estimation of the linear mixed model with two nested random
//! intercepts (cluster and participant).
//!
//! Writing the marginal covariance as `sigma_e^2 * V`, with
//! `V = I + gamma_c Zc Zc' + gamma_d Zd Zd'` and `gamma` the variance ratios
//! (cluster / residual, participant / residual), the residual variance and
//! the fixed effects profile out of the REML criterion. What remains is a
//! two-dimensional search over the ratios, with the criterion
//!
//! ```text
//! (N - p) (ln 2pi + ln s2) + ln det V + ln det(X' V^-1 X) + rss / s2,
//! s2 = rss / (N - p),   rss = (y - X beta)' V^-1 (y - X beta).
//! ```
//!
//! Nothing of size N x N is ever formed. All solves go through the
//! mixed-model normal equations on the random-effects block: with
//! participants ordered before clusters, the participant block is diagonal
//! and — because every participant belongs to exactly one cluster — its Schur
//! complement on the cluster block is diagonal too, so one criterion
//! evaluation costs O(N p + (I + participants) p^2).
//!
//! The ratio search runs Nelder–Mead from four starts on the log-ratio
//! plane, checks the three boundary cases (either or both ratios zero), and
//! sharpens the winner with a finite-difference Newton polish.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::modelspec::ModelMatrices;
use crate::optim::{golden_section, nelder_mead_2d, newton_polish, MinResult};

/// Variance components on the observation scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceComponents {
    pub cluster: f64,
    pub participant: f64,
    pub residual: f64,
}

/// Knobs of the REML ratio search.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Convergence tolerance on the criterion (relative to its magnitude).
    pub criterion_tol: f64,
    /// Evaluation budget per Nelder–Mead start.
    pub max_evals_per_start: usize,
    /// Starting points on the (ln gamma_c, ln gamma_d) plane.
    pub starts: Vec<[f64; 2]>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            criterion_tol: 1e-8,
            max_evals_per_start: 500,
            starts: vec![[-2.0, -2.0], [-2.0, 0.0], [0.0, -2.0], [0.0, 0.0]],
        }
    }
}

/// A fitted mixed model.
#[derive(Debug, Clone)]
pub struct LmmFit {
    pub labels: Vec<String>,
    /// Fixed-effect estimates, one per column of `X`.
    pub estimates: DVector<f64>,
    /// Estimated covariance of the fixed effects,
    /// `sigma_e^2 (X' V^-1 X)^-1`.
    pub covariance: DMatrix<f64>,
    pub components: VarianceComponents,
    /// REML criterion (-2 restricted log-likelihood) at the solution.
    pub criterion: f64,
    pub converged: bool,
    /// Total criterion evaluations spent.
    pub n_evaluations: usize,
    /// Finite-difference gradient norm over the free log-ratio coordinates
    /// at the solution (0 when both ratios sit on the zero boundary).
    pub gradient_norm: f64,
    pub n_obs: usize,
    pub n_fixed: usize,
    pub n_clusters: usize,
    pub n_participants: usize,
    /// Column of the estimates holding the intervention effect.
    pub exposure_column: usize,
}

impl LmmFit {
    pub fn standard_error(&self, column: usize) -> f64 {
        self.covariance[(column, column)].sqrt()
    }

    /// The intervention-effect estimate (the exposure coefficient).
    pub fn intervention_estimate(&self) -> f64 {
        self.estimates[self.exposure_column]
    }
}

// ---------------------------------------------------------------------------
// Small dense Cholesky helpers (p x p systems), reporting the failing column.
// ---------------------------------------------------------------------------

/// Lower Cholesky factor of a symmetric matrix, or the index of the column
/// where positive definiteness fails.
pub(crate) fn cholesky_lower(a: &DMatrix<f64>) -> std::result::Result<DMatrix<f64>, usize> {
    let n = a.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(j);
        }
        let dj = diag.sqrt();
        l[(j, j)] = dj;
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / dj;
        }
    }
    Ok(l)
}

pub(crate) fn chol_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut v = x[i];
        for k in 0..i {
            v -= l[(i, k)] * x[k];
        }
        x[i] = v / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut v = x[i];
        for k in (i + 1)..n {
            v -= l[(k, i)] * x[k];
        }
        x[i] = v / l[(i, i)];
    }
    x
}

fn chol_logdet(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

fn chol_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        let col = chol_solve(l, &e);
        inv.set_column(j, &col);
    }
    // Symmetrize against round-off.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (inv[(i, j)] + inv[(j, i)]);
            inv[(i, j)] = v;
            inv[(j, i)] = v;
        }
    }
    inv
}

// ---------------------------------------------------------------------------
// The structured evaluation context
// ---------------------------------------------------------------------------

/// Everything about (X, y, groupings) that criterion evaluations reuse:
/// cross-products with the random-effect incidence matrices and the group
/// sizes. Building it costs one pass over the data; evaluations afterwards
/// never touch the N-row matrices except through these statistics.
pub(crate) struct FitContext {
    n: usize,
    p: usize,
    n_clusters: usize,
    n_participants: usize,
    /// Observations per cluster.
    cluster_counts: Vec<f64>,
    /// Observations per participant.
    participant_counts: Vec<f64>,
    /// Owning cluster of each participant.
    participant_cluster: Vec<usize>,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    /// Zd' [X | y]: per-participant sums of the X rows and of y.
    zd_xy: Vec<f64>,
    /// Zc' [X | y]: per-cluster sums.
    zc_xy: Vec<f64>,
    labels: Vec<String>,
    /// Lower bound for the profiled residual variance.
    sigma2_floor: f64,
    // Scratch buffers, reused across evaluations.
    scratch_d: Vec<f64>,
    scratch_schur: Vec<f64>,
    scratch_wd: Vec<f64>,
    scratch_wc: Vec<f64>,
}

/// Output of one criterion evaluation at fixed variance ratios.
pub(crate) struct EvalOut {
    pub criterion: f64,
    /// Profiled residual variance (floored away from zero).
    pub sigma2: f64,
    /// `(y - X beta)' V^-1 (y - X beta)` at the GLS estimate.
    pub rss: f64,
    pub beta: DVector<f64>,
    /// Lower Cholesky factor of `S = X' V^-1 X`.
    pub s_chol: DMatrix<f64>,
    pub logdet_v: f64,
    pub logdet_s: f64,
}

impl FitContext {
    pub fn new(m: &ModelMatrices) -> Result<Self> {
        let n = m.n_obs();
        let p = m.n_fixed();
        if n <= p {
            return Err(Error::InvalidArgument(format!(
                "need more observations than fixed effects ({n} rows, {p} columns)"
            )));
        }
        let (qc, qd) = (m.n_clusters, m.n_participants);
        let mut cluster_counts = vec![0.0; qc];
        let mut participant_counts = vec![0.0; qd];
        let mut participant_cluster = vec![usize::MAX; qd];
        let cols = p + 1;
        let mut zd_xy = vec![0.0; qd * cols];
        let mut zc_xy = vec![0.0; qc * cols];
        let mut xtx = DMatrix::zeros(p, p);
        let mut xty = DVector::zeros(p);
        let mut yty = 0.0;
        let mut y_sum = 0.0;

        for row in 0..n {
            let ci = m.cluster_index[row];
            let pi = m.participant_index[row];
            if ci >= qc || pi >= qd {
                return Err(Error::InvalidArgument(
                    "grouping index out of range".into(),
                ));
            }
            if participant_cluster[pi] == usize::MAX {
                participant_cluster[pi] = ci;
            } else if participant_cluster[pi] != ci {
                return Err(Error::InvalidArgument(format!(
                    "participant {pi} appears in more than one cluster"
                )));
            }
            cluster_counts[ci] += 1.0;
            participant_counts[pi] += 1.0;
            let yv = m.y[row];
            y_sum += yv;
            yty += yv * yv;
            for a in 0..p {
                let xa = m.x[(row, a)];
                xty[a] += xa * yv;
                for b in a..p {
                    xtx[(a, b)] += xa * m.x[(row, b)];
                }
                zd_xy[pi * cols + a] += xa;
                zc_xy[ci * cols + a] += xa;
            }
            zd_xy[pi * cols + p] += yv;
            zc_xy[ci * cols + p] += yv;
        }
        for a in 0..p {
            for b in 0..a {
                xtx[(a, b)] = xtx[(b, a)];
            }
        }
        if participant_cluster.iter().any(|&c| c == usize::MAX) {
            return Err(Error::InvalidArgument(
                "a participant index has no observations".into(),
            ));
        }
        let var_y = (yty - y_sum * y_sum / n as f64) / (n as f64 - 1.0);
        let sigma2_floor = (1e-10 * var_y).max(1e-300);

        Ok(FitContext {
            n,
            p,
            n_clusters: qc,
            n_participants: qd,
            cluster_counts,
            participant_counts,
            participant_cluster,
            xtx,
            xty,
            yty,
            zd_xy,
            zc_xy,
            labels: m.labels.clone(),
            sigma2_floor,
            scratch_d: vec![0.0; qd],
            scratch_schur: vec![0.0; qc],
            scratch_wd: vec![0.0; qd * (p + 1)],
            scratch_wc: vec![0.0; qc * (p + 1)],
        })
    }

    /// Evaluates the profiled REML criterion at variance ratios
    /// `(gamma_c, gamma_d)`.
    pub fn eval(&mut self, gamma_c: f64, gamma_d: f64) -> Result<EvalOut> {
        if !(gamma_c >= 0.0) || !(gamma_d >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "variance ratios must be nonnegative, got ({gamma_c}, {gamma_d})"
            )));
        }
        let (n, p) = (self.n, self.p);
        let (qc, qd) = (self.n_clusters, self.n_participants);
        let cols = p + 1;
        let sqrt_cd = (gamma_c * gamma_d).sqrt();

        // Participant block diagonal and cluster-block Schur complement.
        let mut logdet_v = 0.0;
        for k in 0..qd {
            let d = 1.0 + gamma_d * self.participant_counts[k];
            self.scratch_d[k] = d;
            logdet_v += d.ln();
        }
        for i in 0..qc {
            self.scratch_schur[i] = 1.0 + gamma_c * self.cluster_counts[i];
        }
        if gamma_c > 0.0 && gamma_d > 0.0 {
            for k in 0..qd {
                let mk = self.participant_counts[k];
                self.scratch_schur[self.participant_cluster[k]] -=
                    gamma_c * gamma_d * mk * mk / self.scratch_d[k];
            }
        }
        for i in 0..qc {
            logdet_v += self.scratch_schur[i].ln();
        }

        // Solve M w = r for the scaled right-hand sides
        // r = [sqrt(gamma_d) Zd'(X|y); sqrt(gamma_c) Zc'(X|y)].
        let sd = gamma_d.sqrt();
        let sc = gamma_c.sqrt();
        // Cluster part: w_c = (r_c - B D^-1 r_d) / schur, where B has the
        // single entry sqrt_cd * m_k in column k, row cluster(k).
        for i in 0..qc {
            for j in 0..cols {
                self.scratch_wc[i * cols + j] = sc * self.zc_xy[i * cols + j];
            }
        }
        if sqrt_cd > 0.0 {
            for k in 0..qd {
                let f = sqrt_cd * self.participant_counts[k] / self.scratch_d[k] * sd;
                let ci = self.participant_cluster[k];
                for j in 0..cols {
                    self.scratch_wc[ci * cols + j] -= f * self.zd_xy[k * cols + j];
                }
            }
        }
        for i in 0..qc {
            let s = self.scratch_schur[i];
            for j in 0..cols {
                self.scratch_wc[i * cols + j] /= s;
            }
        }
        // Participant part: w_d = (r_d - B' w_c) / d.
        for k in 0..qd {
            let d = self.scratch_d[k];
            let ci = self.participant_cluster[k];
            let f = sqrt_cd * self.participant_counts[k];
            for j in 0..cols {
                self.scratch_wd[k * cols + j] =
                    (sd * self.zd_xy[k * cols + j] - f * self.scratch_wc[ci * cols + j]) / d;
            }
        }

        // G = R' M^-1 R over the stacked [X | y] right-hand sides.
        let mut g = vec![0.0; cols * cols];
        for k in 0..qd {
            let base = k * cols;
            for a in 0..cols {
                let ra = sd * self.zd_xy[base + a];
                if ra != 0.0 {
                    for b in a..cols {
                        g[a * cols + b] += ra * self.scratch_wd[base + b];
                    }
                }
            }
        }
        for i in 0..qc {
            let base = i * cols;
            for a in 0..cols {
                let ra = sc * self.zc_xy[base + a];
                if ra != 0.0 {
                    for b in a..cols {
                        g[a * cols + b] += ra * self.scratch_wc[base + b];
                    }
                }
            }
        }

        // S = X'V^-1X, t = X'V^-1y, yvy = y'V^-1y.
        let mut s = DMatrix::zeros(p, p);
        for a in 0..p {
            for b in a..p {
                let v = self.xtx[(a, b)] - g[a * cols + b];
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
        let mut t = DVector::zeros(p);
        for a in 0..p {
            t[a] = self.xty[a] - g[a * cols + p];
        }
        let yvy = self.yty - g[p * cols + p];

        let s_chol = cholesky_lower(&s).map_err(|col| {
            Error::Singular(format!(
                "X'V^-1X is not positive definite at column '{}'",
                self.labels[col]
            ))
        })?;
        let logdet_s = chol_logdet(&s_chol);
        let beta = chol_solve(&s_chol, &t);
        let rss = (yvy - beta.dot(&t)).max(0.0);
        let dof = (n - p) as f64;
        let sigma2 = (rss / dof).max(self.sigma2_floor);
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        let criterion = dof * (ln_2pi + sigma2.ln()) + logdet_v + logdet_s + rss / sigma2;
        if !criterion.is_finite() {
            return Err(Error::Singular(format!(
                "REML criterion is not finite at ratios ({gamma_c}, {gamma_d})"
            )));
        }
        Ok(EvalOut {
            criterion,
            sigma2,
            rss,
            beta,
            s_chol,
            logdet_v,
            logdet_s,
        })
    }

    /// The non-profiled criterion at explicit variance components, used for
    /// the curvature of the REML surface in component space.
    pub fn criterion_at_components(&mut self, c: &VarianceComponents) -> Result<f64> {
        validate_components(c)?;
        let out = self.eval(c.cluster / c.residual, c.participant / c.residual)?;
        let dof = (self.n - self.p) as f64;
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        Ok(dof * (ln_2pi + c.residual.ln()) + out.logdet_v + out.logdet_s + out.rss / c.residual)
    }

    /// GLS fixed effects and their covariance at explicit components.
    pub fn gls(&mut self, c: &VarianceComponents) -> Result<(DVector<f64>, DMatrix<f64>)> {
        validate_components(c)?;
        let out = self.eval(c.cluster / c.residual, c.participant / c.residual)?;
        let cov = chol_inverse(&out.s_chol) * c.residual;
        Ok((out.beta, cov))
    }
}

fn validate_components(c: &VarianceComponents) -> Result<()> {
    if !(c.cluster >= 0.0) || !(c.participant >= 0.0) || !(c.residual > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "variance components must satisfy cluster >= 0, participant >= 0, residual > 0; \
             got ({}, {}, {})",
            c.cluster, c.participant, c.residual
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Public entry points
// ---------------------------------------------------------------------------

/// Profiled REML criterion at fixed variance ratios. Returns the criterion,
/// the profiled residual variance, and the GLS fixed effects.
pub fn reml_objective(
    matrices: &ModelMatrices,
    gamma_cluster: f64,
    gamma_participant: f64,
) -> Result<(f64, f64, DVector<f64>)> {
    let mut ctx = FitContext::new(matrices)?;
    let out = ctx.eval(gamma_cluster, gamma_participant)?;
    Ok((out.criterion, out.sigma2, out.beta))
}

/// GLS fixed effects and covariance at explicit variance components.
pub fn gls_fixed_effects(
    matrices: &ModelMatrices,
    components: &VarianceComponents,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    FitContext::new(matrices)?.gls(components)
}

/// The REML criterion as a function of explicit variance components
/// (not profiled). Minimized at the same solution as [`fit_reml`].
pub fn reml_criterion_at(
    matrices: &ModelMatrices,
    components: &VarianceComponents,
) -> Result<f64> {
    FitContext::new(matrices)?.criterion_at_components(components)
}

/// Log-ratio bounds for the interior search; `exp(-30)` is numerically zero
/// relative to any data scale while keeping the criterion finite.
const LOG_RATIO_MIN: f64 = -30.0;
const LOG_RATIO_MAX: f64 = 15.0;

struct Candidate {
    gamma: [f64; 2],
    value: f64,
    converged: bool,
    free: [bool; 2],
}

/// Fits the model by REML: interior Nelder–Mead over log ratios from every
/// start, boundary searches with either or both ratios pinned at zero, and a
/// Newton polish of the winner. Boundary solutions are preferred on ties so
/// vanishing components come out exactly zero.
pub fn fit_reml(matrices: &ModelMatrices, options: &SolverOptions) -> Result<LmmFit> {
    let mut ctx = FitContext::new(matrices)?;
    let mut evals = 0usize;

    // Infinite value for failed evaluations keeps the search away.
    macro_rules! objective {
        () => {
            |x: &[f64; 2]| {
                evals += 1;
                let gc = x[0].clamp(LOG_RATIO_MIN, LOG_RATIO_MAX).exp();
                let gd = x[1].clamp(LOG_RATIO_MIN, LOG_RATIO_MAX).exp();
                ctx.eval(gc, gd).map(|o| o.criterion).unwrap_or(f64::INFINITY)
            }
        };
    }

    let tol = options.criterion_tol;
    let mut candidates: Vec<Candidate> = Vec::new();

    // Interior: Nelder–Mead from each start, polish the best.
    {
        let mut best: Option<MinResult<[f64; 2]>> = None;
        let mut any_converged = false;
        for &start in &options.starts {
            let r = {
                let mut f = objective!();
                nelder_mead_2d(&mut f, start, 1.0, tol, options.max_evals_per_start)
            };
            any_converged |= r.converged;
            if best.as_ref().is_none_or(|b| r.value < b.value) {
                best = Some(r);
            }
        }
        if let Some(b) = best {
            let polished = {
                let mut f = objective!();
                newton_polish(&mut f, b.x, [true, true], 20)
            };
            // The polish refines the location even where the criterion is
            // flat at machine resolution, so prefer its point on a noise tie.
            let tie = 1e-9 * (1.0 + b.value.abs());
            let x = if polished.value <= b.value + tie { polished.x } else { b.x };
            let value = polished.value.min(b.value);
            candidates.push(Candidate {
                gamma: [
                    x[0].clamp(LOG_RATIO_MIN, LOG_RATIO_MAX).exp(),
                    x[1].clamp(LOG_RATIO_MIN, LOG_RATIO_MAX).exp(),
                ],
                value,
                converged: any_converged || polished.converged,
                free: [true, true],
            });
        }
    }

    // Boundary: one ratio pinned at exactly zero, scan the other.
    for pinned in 0..2 {
        let free = pinned ^ 1;
        // 2-D objective that ignores the pinned coordinate.
        macro_rules! boundary_objective {
            () => {
                |x: &[f64; 2]| {
                    evals += 1;
                    let g = x[free].clamp(LOG_RATIO_MIN, LOG_RATIO_MAX).exp();
                    let (gc, gd) = if pinned == 0 { (0.0, g) } else { (g, 0.0) };
                    ctx.eval(gc, gd).map(|o| o.criterion).unwrap_or(f64::INFINITY)
                }
            };
        }
        let gs = {
            let mut f = boundary_objective!();
            golden_section(
                |l| {
                    let mut x = [0.0; 2];
                    x[free] = l;
                    f(&x)
                },
                LOG_RATIO_MIN,
                LOG_RATIO_MAX,
                1e-9,
                options.max_evals_per_start,
            )
        };
        let polished = {
            let mut f = boundary_objective!();
            let mut start = [0.0; 2];
            start[free] = gs.x;
            newton_polish(&mut f, start, mask_of(free), 20)
        };
        let tie = 1e-9 * (1.0 + gs.value.abs());
        let l = if polished.value <= gs.value + tie {
            polished.x[free]
        } else {
            gs.x
        };
        let mut gamma = [0.0; 2];
        gamma[free] = l.clamp(LOG_RATIO_MIN, LOG_RATIO_MAX).exp();
        candidates.push(Candidate {
            gamma,
            value: polished.value.min(gs.value),
            converged: gs.converged || polished.converged,
            free: mask_of(free),
        });
    }

    // Both ratios zero (ordinary least squares).
    {
        evals += 1;
        if let Ok(out) = ctx.eval(0.0, 0.0) {
            candidates.push(Candidate {
                gamma: [0.0, 0.0],
                value: out.criterion,
                converged: true,
                free: [false, false],
            });
        }
    }

    let best_value = candidates
        .iter()
        .map(|c| c.value)
        .fold(f64::INFINITY, f64::min);
    if !best_value.is_finite() {
        return Err(Error::Singular(
            "REML criterion could not be evaluated anywhere".into(),
        ));
    }
    // Prefer the candidate with the fewest free ratios among those within a
    // whisker of the best value: ties go to the boundary.
    let tie = 1e-9 * (1.0 + best_value.abs());
    let chosen = candidates
        .iter()
        .filter(|c| c.value <= best_value + tie)
        .min_by_key(|c| c.free.iter().filter(|&&f| f).count())
        .expect("at least one finite candidate");

    let (gamma_c, gamma_d) = (chosen.gamma[0], chosen.gamma[1]);
    let out = ctx.eval(gamma_c, gamma_d)?;
    evals += 1;

    // Gradient over the free log-ratio coordinates, for diagnostics. Pinned
    // coordinates stay at exactly zero while a free one is perturbed.
    let mut gradient_norm = 0.0;
    let h = 1e-5;
    for dim in 0..2 {
        if !chosen.free[dim] || chosen.gamma[dim] <= 0.0 {
            continue;
        }
        let l = chosen.gamma[dim].ln();
        let mut gp = chosen.gamma;
        let mut gm = chosen.gamma;
        gp[dim] = (l + h).exp();
        gm[dim] = (l - h).exp();
        evals += 2;
        let fp = ctx.eval(gp[0], gp[1]).map(|o| o.criterion);
        let fm = ctx.eval(gm[0], gm[1]).map(|o| o.criterion);
        if let (Ok(fp), Ok(fm)) = (fp, fm) {
            let slope = (fp - fm) / (2.0 * h);
            gradient_norm += slope * slope;
        }
    }
    let gradient_norm = gradient_norm.sqrt();

    let sigma2 = out.sigma2;
    let covariance = chol_inverse(&out.s_chol) * sigma2;
    Ok(LmmFit {
        labels: matrices.labels.clone(),
        estimates: out.beta,
        covariance,
        components: VarianceComponents {
            cluster: gamma_c * sigma2,
            participant: gamma_d * sigma2,
            residual: sigma2,
        },
        criterion: out.criterion,
        converged: chosen.converged,
        n_evaluations: evals,
        gradient_norm,
        n_obs: matrices.n_obs(),
        n_fixed: matrices.n_fixed(),
        n_clusters: matrices.n_clusters,
        n_participants: matrices.n_participants,
        exposure_column: matrices.exposure_column,
    })
}

fn mask_of(free: usize) -> [bool; 2] {
    let mut m = [false; 2];
    m[free] = true;
    m
}
