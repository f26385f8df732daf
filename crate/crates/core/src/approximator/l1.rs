//! Solvers for `min_a ‖Φa − f‖₂ + α‖a‖₁` (note: the residual norm is not squared).

use nalgebra::{DMatrix, DVector};

/// Minimum-norm least-squares solution of `Φa ≈ f` via SVD.
///
/// Singular values below `σ_max · max(m, n) · ε` are treated as zero; one
/// refinement step recovers accuracy lost to ill-conditioning.
/// Returns the solution and the numerical rank.
pub fn least_squares_min_norm(phi: &DMatrix<f64>, f: &DVector<f64>) -> (DVector<f64>, usize) {
    let (m, n) = phi.shape();
    if m == 0 || n == 0 {
        return (DVector::zeros(n), 0);
    }
    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = smax * (m.max(n) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    let Ok(mut a) = svd.solve(f, cutoff) else {
        return (DVector::zeros(n), 0);
    };
    // one step of iterative refinement; the correction stays in the row space
    if let Ok(delta) = svd.solve(&(f - phi * &a), cutoff) {
        a += delta;
    }
    (a, rank)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Options {
    pub max_iter: usize,
    /// Stop when the subgradient optimality residual drops below
    /// `tol · (1 + ‖a‖∞)`.
    pub tol: f64,
}

impl Default for L1Options {
    fn default() -> Self {
        L1Options {
            max_iter: 200_000,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct L1Solution {
    pub coefficients: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Objective after each iteration, starting with the initial point.
    pub history: Vec<f64>,
    pub optimality: f64,
}

/// `‖Φa − f‖₂ + α‖a‖₁`.
pub fn objective(phi: &DMatrix<f64>, f: &DVector<f64>, a: &DVector<f64>, alpha: f64) -> f64 {
    (phi * a - f).norm() + alpha * a.lp_norm(1)
}

/// Largest violation of the subgradient optimality conditions at `a`.
///
/// Requires a nonzero residual, where the data term is differentiable; at a
/// zero residual the conditions are not checkable this way and 0 is returned.
pub fn optimality_residual(phi: &DMatrix<f64>, f: &DVector<f64>, a: &DVector<f64>, alpha: f64) -> f64 {
    let r = phi * a - f;
    let rn = r.norm();
    if rn == 0.0 {
        return 0.0;
    }
    let s = phi.tr_mul(&r) / rn;
    a.iter()
        .zip(s.iter())
        .map(|(&ai, &si)| {
            if ai != 0.0 {
                (si + alpha * ai.signum()).abs()
            } else {
                (si.abs() - alpha).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn soft_threshold(v: &DVector<f64>, t: f64) -> DVector<f64> {
    v.map(|x| x.signum() * (x.abs() - t).max(0.0))
}

/// Monotone FISTA with backtracking and adaptive restart.
///
/// The data term `‖Φa − f‖₂` is replaced by `sqrt(‖Φa − f‖² + μ²)` with
/// `μ = 1e-14·(1 + ‖f‖)` so the gradient stays defined when the residual
/// vanishes; the change in objective is below `μ`.
pub fn solve_l1(
    phi: &DMatrix<f64>,
    f: &DVector<f64>,
    alpha: f64,
    start: &DVector<f64>,
    opts: &L1Options,
) -> L1Solution {
    let mu = 1e-14 * (1.0 + f.norm());
    let smooth = |a: &DVector<f64>| -> (f64, DVector<f64>) {
        let r = phi * a - f;
        let g = (r.norm_squared() + mu * mu).sqrt();
        (g, phi.tr_mul(&r) / g)
    };
    let smooth_value = |a: &DVector<f64>| -> f64 { ((phi * a - f).norm_squared() + mu * mu).sqrt() };
    let total = |a: &DVector<f64>| smooth_value(a) + alpha * a.lp_norm(1);

    let mut x = start.clone();
    let mut fx = total(&x);
    let mut y = x.clone();
    let mut t = 1.0_f64;
    let op_norm_sq = phi.norm_squared().max(f64::MIN_POSITIVE);
    let mut lip = op_norm_sq / (f.norm() + mu).max(1e-300);
    let mut history = vec![objective(phi, f, &x, alpha)];
    let mut iterations = 0;
    let mut stall = 0;

    while iterations < opts.max_iter {
        let scale = 1.0 + x.amax();
        if alpha > 0.0 || iterations > 0 {
            let opt = optimality_residual(phi, f, &x, alpha);
            if opt <= opts.tol * scale {
                break;
            }
        }
        iterations += 1;

        let (gy, grad) = smooth(&y);
        let mut z;
        loop {
            z = soft_threshold(&(&y - &grad / lip), alpha / lip);
            let diff = &z - &y;
            let model = gy + grad.dot(&diff) + 0.5 * lip * diff.norm_squared();
            if smooth_value(&z) <= model + 1e-15 * gy.abs() || lip > 1e300 {
                break;
            }
            lip *= 2.0;
        }
        let fz = total(&z);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x.clone();
        if fz <= fx {
            x = z.clone();
            y = &x + (&x - &x_prev) * ((t - 1.0) / t_next);
            t = t_next;
        } else {
            // restart momentum from the best point
            y = x.clone();
            t = 1.0;
        }
        let f_new = fz.min(fx);
        if (fx - f_new).abs() <= 1e-16 * fx.abs().max(1.0) {
            stall += 1;
            if stall > 50 {
                history.push(objective(phi, f, &x, alpha));
                break;
            }
        } else {
            stall = 0;
        }
        fx = f_new;
        history.push(objective(phi, f, &x, alpha));
        lip = (lip * 0.9).max(f64::MIN_POSITIVE);
    }
    L1Solution {
        objective: objective(phi, f, &x, alpha),
        optimality: optimality_residual(phi, f, &x, alpha),
        coefficients: x,
        iterations,
        history,
    }
}
