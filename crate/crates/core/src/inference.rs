//! Hypothesis tests on fixed effects with Satterthwaite degrees of freedom.
//!
//! The sampling variance of a fixed-effect estimate depends on the variance
//! components, which are themselves estimated. The Satterthwaite approach
//! treats the coefficient variance `g(psi) = C_jj(psi)` as a smooth function
//! of the components `psi = (cluster, participant, residual)` and matches a
//! scaled chi-square to it:
//!
//! ```text
//! df = 2 g^2 / (grad g' A grad g),   A = 2 H^-1,
//! ```
//!
//! where `H` is the curvature of the REML criterion at the estimates (so `A`
//! is the asymptotic covariance of the component estimates). Both the
//! gradient and `H` come from central finite differences; components sitting
//! on the zero boundary are held fixed and excluded. When the curvature is
//! not positive definite the residual degrees of freedom `N - p` are used
//! instead and the result is flagged.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lmm::{cholesky_lower, chol_solve, FitContext, LmmFit, VarianceComponents};
use crate::modelspec::ModelMatrices;
use crate::tdist::two_sided_p_value;

/// Satterthwaite degrees of freedom for one coefficient.
#[derive(Debug, Clone, Copy)]
pub struct SatterthwaiteDf {
    pub df: f64,
    /// True when the curvature was unusable and `N - p` was substituted.
    pub fallback: bool,
}

/// A two-sided t-test of one fixed-effect coefficient.
#[derive(Debug, Clone)]
pub struct CoefficientTest {
    pub label: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub df: f64,
    pub t_statistic: f64,
    pub p_value: f64,
    pub significant: bool,
    pub alpha: f64,
    pub df_fallback: bool,
}

/// Relative step for the gradient of the coefficient variance.
const GRADIENT_REL_STEP: f64 = 1e-4;
/// Relative step for the curvature of the REML criterion.
const HESSIAN_REL_STEP: f64 = 1e-3;

/// Satterthwaite degrees of freedom for `coefficient` of a fitted model.
pub fn satterthwaite_df(
    matrices: &ModelMatrices,
    fit: &LmmFit,
    coefficient: usize,
) -> Result<SatterthwaiteDf> {
    if coefficient >= matrices.n_fixed() {
        return Err(Error::InvalidArgument(format!(
            "coefficient index {coefficient} out of range for {} fixed effects",
            matrices.n_fixed()
        )));
    }
    let mut ctx = FitContext::new(matrices)?;
    satterthwaite_at(
        &mut ctx,
        &fit.components,
        coefficient,
        matrices.n_obs(),
        matrices.n_fixed(),
    )
}

/// Core computation at explicit variance components. `n` and `p` give the
/// residual degrees of freedom used by the fallback.
pub(crate) fn satterthwaite_at(
    ctx: &mut FitContext,
    components: &VarianceComponents,
    coefficient: usize,
    n: usize,
    p: usize,
) -> Result<SatterthwaiteDf> {
    let resid_df = (n - p) as f64;
    let psi = [components.cluster, components.participant, components.residual];
    // Boundary components are fixed at zero and dropped.
    let free: Vec<usize> = (0..3).filter(|&i| psi[i] > 0.0).collect();
    let k = free.len();

    let var_at = |ctx: &mut FitContext, psi: &[f64; 3]| -> Result<f64> {
        let c = VarianceComponents {
            cluster: psi[0],
            participant: psi[1],
            residual: psi[2],
        };
        let (_, cov) = ctx.gls(&c)?;
        Ok(cov[(coefficient, coefficient)])
    };
    let m2l_at = |ctx: &mut FitContext, psi: &[f64; 3]| -> Result<f64> {
        ctx.criterion_at_components(&VarianceComponents {
            cluster: psi[0],
            participant: psi[1],
            residual: psi[2],
        })
    };

    let g0 = var_at(ctx, &psi)?;

    // Gradient of the coefficient variance over the free components.
    let mut grad = DVector::zeros(k);
    for (a, &i) in free.iter().enumerate() {
        let h = (GRADIENT_REL_STEP * psi[i]).max(1e-8 * components.residual).min(psi[i]);
        let mut up = psi;
        let mut dn = psi;
        up[i] += h;
        dn[i] -= h;
        grad[a] = (var_at(ctx, &up)? - var_at(ctx, &dn)?) / (2.0 * h);
    }

    // Curvature of the REML criterion over the free components.
    let mut steps = vec![0.0; k];
    for (a, &i) in free.iter().enumerate() {
        steps[a] = (HESSIAN_REL_STEP * psi[i])
            .max(1e-6 * components.residual)
            .min(psi[i]);
    }
    let f0 = m2l_at(ctx, &psi)?;
    let mut hess = DMatrix::zeros(k, k);
    for a in 0..k {
        let i = free[a];
        let ha = steps[a];
        let mut up = psi;
        let mut dn = psi;
        up[i] += ha;
        dn[i] -= ha;
        hess[(a, a)] = (m2l_at(ctx, &up)? - 2.0 * f0 + m2l_at(ctx, &dn)?) / (ha * ha);
        for b in (a + 1)..k {
            let j = free[b];
            let hb = steps[b];
            let mut pp = psi;
            let mut pm = psi;
            let mut mp = psi;
            let mut mm = psi;
            pp[i] += ha;
            pp[j] += hb;
            pm[i] += ha;
            pm[j] -= hb;
            mp[i] -= ha;
            mp[j] += hb;
            mm[i] -= ha;
            mm[j] -= hb;
            let v = (m2l_at(ctx, &pp)? - m2l_at(ctx, &pm)? - m2l_at(ctx, &mp)?
                + m2l_at(ctx, &mm)?)
                / (4.0 * ha * hb);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }

    // df = 2 g^2 / (grad' (2 H^-1) grad); solve H u = grad rather than invert.
    let df = match cholesky_lower(&hess) {
        Ok(l) => {
            let u = chol_solve(&l, &grad);
            let denom = 2.0 * grad.dot(&u);
            let raw = 2.0 * g0 * g0 / denom;
            if raw.is_finite() && raw > 0.0 {
                Some(raw.min(resid_df))
            } else {
                None
            }
        }
        Err(_) => None,
    };
    Ok(match df {
        Some(df) => SatterthwaiteDf { df, fallback: false },
        None => SatterthwaiteDf {
            df: resid_df,
            fallback: true,
        },
    })
}

/// Two-sided t-test of one coefficient of a fitted model, with Satterthwaite
/// degrees of freedom.
pub fn wald_t_test(
    matrices: &ModelMatrices,
    fit: &LmmFit,
    coefficient: usize,
    alpha: f64,
) -> Result<CoefficientTest> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "significance level must lie in (0, 1), got {alpha}"
        )));
    }
    let sat = satterthwaite_df(matrices, fit, coefficient)?;
    let estimate = fit.estimates[coefficient];
    let se = fit.standard_error(coefficient);
    let (t, p) = if se > 0.0 && se.is_finite() {
        let t = estimate / se;
        (t, two_sided_p_value(t, sat.df)?)
    } else {
        // Degenerate covariance: decide by the point estimate alone.
        let t = if estimate == 0.0 { 0.0 } else { f64::INFINITY * estimate.signum() };
        (t, if estimate == 0.0 { 1.0 } else { 0.0 })
    };
    Ok(CoefficientTest {
        label: fit.labels[coefficient].clone(),
        estimate,
        standard_error: se,
        df: sat.df,
        t_statistic: t,
        p_value: p,
        significant: p < alpha,
        alpha,
        df_fallback: sat.fallback,
    })
}
