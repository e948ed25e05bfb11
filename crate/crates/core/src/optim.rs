//! Small derivative-free minimizers for the REML variance-ratio search:
//! a two-dimensional Nelder–Mead simplex and a one-dimensional golden-section
//! scan, plus a finite-difference Newton polish to tighten whatever either of
//! them returns.

/// Result of a scalar or simplex minimization.
#[derive(Debug, Clone, Copy)]
pub struct MinResult<X> {
    pub x: X,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Standard Nelder–Mead in two dimensions (reflection 1, expansion 2,
/// contraction 0.5, shrink 0.5). Terminates when the simplex value spread
/// drops below `tol * (1 + |best|)` or after `max_evals` evaluations.
pub fn nelder_mead_2d(
    mut f: impl FnMut(&[f64; 2]) -> f64,
    start: [f64; 2],
    initial_step: f64,
    tol: f64,
    max_evals: usize,
) -> MinResult<[f64; 2]> {
    let mut evals = 0usize;
    let mut eval = |x: &[f64; 2], evals: &mut usize| {
        *evals += 1;
        f(x)
    };

    let mut pts: Vec<([f64; 2], f64)> = Vec::with_capacity(3);
    let v0 = eval(&start, &mut evals);
    pts.push((start, v0));
    for dim in 0..2 {
        let mut x = start;
        x[dim] += initial_step;
        let v = eval(&x, &mut evals);
        pts.push((x, v));
    }

    let mut converged = false;
    while evals < max_evals {
        pts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread = pts[2].1 - pts[0].1;
        if spread.abs() <= tol * (1.0 + pts[0].1.abs()) {
            converged = true;
            break;
        }
        let (best, worst) = (pts[0], pts[2]);
        let centroid = [
            (pts[0].0[0] + pts[1].0[0]) / 2.0,
            (pts[0].0[1] + pts[1].0[1]) / 2.0,
        ];
        let dir = [centroid[0] - worst.0[0], centroid[1] - worst.0[1]];
        let at = |t: f64| [centroid[0] + t * dir[0], centroid[1] + t * dir[1]];

        let reflected = at(1.0);
        let fr = eval(&reflected, &mut evals);
        if fr < best.1 {
            let expanded = at(2.0);
            let fe = eval(&expanded, &mut evals);
            pts[2] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < pts[1].1 {
            pts[2] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 { at(0.5) } else { at(-0.5) };
            let fc = eval(&contracted, &mut evals);
            if fc < worst.1.min(fr) {
                pts[2] = (contracted, fc);
            } else {
                // Shrink toward the best point.
                for i in 1..3 {
                    let x = [
                        (pts[i].0[0] + best.0[0]) / 2.0,
                        (pts[i].0[1] + best.0[1]) / 2.0,
                    ];
                    let v = eval(&x, &mut evals);
                    pts[i] = (x, v);
                }
            }
        }
    }
    pts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    MinResult {
        x: pts[0].0,
        value: pts[0].1,
        evaluations: evals,
        converged,
    }
}

/// Golden-section minimization of a unimodal scalar function on `[a, b]`.
pub fn golden_section(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    tol_x: f64,
    max_evals: usize,
) -> MinResult<f64> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut evals = 0usize;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    evals += 2;
    while (b - a).abs() > tol_x && evals < max_evals {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evals += 1;
    }
    let (x, value) = if fc < fd { (c, fc) } else { (d, fd) };
    MinResult {
        x,
        value,
        evaluations: evals,
        converged: (b - a).abs() <= tol_x,
    }
}

/// A few damped Newton steps on finite-difference derivatives, used to
/// sharpen a simplex optimum. Coordinates can be frozen (for boundary
/// solutions) via `active`. Steps that fail to decrease the value are
/// halved; the polish stops when the gradient or the step is tiny.
///
/// Near the optimum of a flat objective, value comparisons saturate at the
/// evaluation noise floor while the gradient still carries signal, so when
/// no halved step improves the value, a small positive-definite Newton step
/// is still accepted if it shrinks the finite-difference gradient.
pub fn newton_polish(
    mut f: impl FnMut(&[f64; 2]) -> f64,
    start: [f64; 2],
    active: [bool; 2],
    max_iters: usize,
) -> MinResult<[f64; 2]> {
    let h = 1e-5;
    let mut x = start;
    let mut fx = f(&x);
    let mut evals = 1usize;
    let mut converged = false;
    // Gradient-shrink acceptances carry real signal only for the first few
    // steps; after that they wander at the finite-difference noise floor.
    let mut gradient_steps_left = 5usize;

    let idx: Vec<usize> = (0..2).filter(|&i| active[i]).collect();
    if idx.is_empty() {
        return MinResult {
            x,
            value: fx,
            evaluations: evals,
            converged: true,
        };
    }

    for _ in 0..max_iters {
        // Gradient and Hessian on the active coordinates.
        let k = idx.len();
        let mut grad = vec![0.0; k];
        let mut hess = vec![0.0; k * k];
        for (a, &i) in idx.iter().enumerate() {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let (fp, fm) = (f(&xp), f(&xm));
            evals += 2;
            grad[a] = (fp - fm) / (2.0 * h);
            hess[a * k + a] = (fp - 2.0 * fx + fm) / (h * h);
        }
        if k == 2 {
            let (i, j) = (idx[0], idx[1]);
            let mut xpp = x;
            xpp[i] += h;
            xpp[j] += h;
            let mut xpm = x;
            xpm[i] += h;
            xpm[j] -= h;
            let mut xmp = x;
            xmp[i] -= h;
            xmp[j] += h;
            let mut xmm = x;
            xmm[i] -= h;
            xmm[j] -= h;
            let cross = (f(&xpp) - f(&xpm) - f(&xmp) + f(&xmm)) / (4.0 * h * h);
            evals += 4;
            hess[1] = cross;
            hess[2] = cross;
        }

        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm <= 1e-10 * (1.0 + fx.abs()) {
            converged = true;
            break;
        }

        // Newton direction, falling back to steepest descent when the
        // Hessian is not positive definite.
        let positive_definite = if k == 1 {
            hess[0] > 0.0
        } else {
            hess[0] > 0.0 && hess[0] * hess[3] - hess[1] * hess[2] > 0.0
        };
        let step: Vec<f64> = if k == 1 {
            if positive_definite {
                vec![-grad[0] / hess[0]]
            } else {
                vec![-grad[0].signum() * h * 10.0]
            }
        } else if positive_definite {
            let det = hess[0] * hess[3] - hess[1] * hess[2];
            vec![
                -(hess[3] * grad[0] - hess[1] * grad[1]) / det,
                -(hess[0] * grad[1] - hess[2] * grad[0]) / det,
            ]
        } else {
            grad.iter().map(|g| -g / gnorm * h * 10.0).collect()
        };

        // Damped update.
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let mut xn = x;
            for (a, &i) in idx.iter().enumerate() {
                xn[i] = x[i] + scale * step[a];
            }
            let fn_ = f(&xn);
            evals += 1;
            if fn_ < fx {
                let step_size = step
                    .iter()
                    .map(|s| (s * scale).powi(2))
                    .sum::<f64>()
                    .sqrt();
                x = xn;
                fx = fn_;
                improved = true;
                if step_size < 1e-12 {
                    converged = true;
                }
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            // The value landscape has gone flat at machine resolution. Take
            // the full Newton step anyway if it demonstrably shrinks the
            // gradient; otherwise we are at the (numerical) optimum.
            let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
            let mut moved = false;
            if positive_definite && step_norm <= 1e-3 && gradient_steps_left > 0 {
                gradient_steps_left -= 1;
                let mut xn = x;
                for (a, &i) in idx.iter().enumerate() {
                    xn[i] = x[i] + step[a];
                }
                let mut gn = 0.0;
                for &i in &idx {
                    let mut xp = xn;
                    let mut xm = xn;
                    xp[i] += h;
                    xm[i] -= h;
                    let g = (f(&xp) - f(&xm)) / (2.0 * h);
                    evals += 2;
                    gn += g * g;
                }
                if gn.sqrt() < 0.9 * gnorm {
                    fx = f(&xn);
                    evals += 1;
                    x = xn;
                    moved = true;
                }
            }
            if !moved {
                converged = true;
                break;
            }
        }
        if converged {
            break;
        }
    }
    MinResult {
        x,
        value: fx,
        evaluations: evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nelder_mead_finds_quadratic_minimum() {
        let f = |x: &[f64; 2]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 5.0;
        let r = nelder_mead_2d(f, [0.0, 0.0], 1.0, 1e-12, 500);
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-4, "x0 = {}", r.x[0]);
        assert!((r.x[1] + 1.0).abs() < 1e-4, "x1 = {}", r.x[1]);
    }

    #[test]
    fn nelder_mead_handles_rosenbrock_valley() {
        let f = |x: &[f64; 2]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead_2d(f, [-1.2, 1.0], 0.5, 1e-13, 2000);
        assert!((r.x[0] - 1.0).abs() < 1e-3);
        assert!((r.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn golden_section_brackets_scalar_minimum() {
        let r = golden_section(|x| (x - 2.5).powi(2) + 1.0, -10.0, 10.0, 1e-10, 200);
        assert!(r.converged);
        assert!((r.x - 2.5).abs() < 1e-7);
    }

    #[test]
    fn newton_polish_sharpens_a_rough_optimum() {
        let f = |x: &[f64; 2]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + 5.0;
        let r = newton_polish(f, [3.01, -0.99], [true, true], 20);
        assert!((r.x[0] - 3.0).abs() < 1e-7);
        assert!((r.x[1] + 1.0).abs() < 1e-7);
        assert!(r.value >= 5.0 && r.value < 5.0 + 1e-12);
    }

    #[test]
    fn newton_polish_respects_frozen_coordinates() {
        let f = |x: &[f64; 2]| (x[0] - 3.0).powi(2) + (x[1] - 4.0).powi(2);
        let r = newton_polish(f, [0.5, 0.0], [true, false], 20);
        assert!((r.x[0] - 3.0).abs() < 1e-7);
        assert_eq!(r.x[1], 0.0, "frozen coordinate must not move");
    }
}
