//! Global and local maximum-entropy basis functions.
//!
//! For a query `x` and nodes `xᵢ`, the local basis minimizes the relative
//! entropy `Σ ψᵢ log(ψᵢ/mᵢ)` to the Gaussian prior `mᵢ = exp(-β‖xᵢ - x‖²)`
//! subject to `Σψᵢ = 1` and `Σ ψᵢ (xᵢ - x) = 0`. The solution has the form
//!
//! ```text
//! ψᵢ = mᵢ exp(-λᵀx̃ᵢ) / Σⱼ mⱼ exp(-λᵀx̃ⱼ)
//! ```
//!
//! where `λ ∈ R^d` minimizes the convex dual `log Z(λ)`. `β = 0` gives the
//! global (Shannon entropy) basis. We solve the dual with damped Newton.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, in_hull, shift, Membership, NodeSet, ShiftedNodes};

/// Multipliers beyond this magnitude abort the Newton loop.
const LAMBDA_LIMIT: f64 = 1e8;
const ARMIJO_C: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Tolerance on the ∞-norm of the dual gradient `Σ ψᵢ x̃ᵢ`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative ridge added to the Hessian before each Newton solve.
    pub hessian_ridge: f64,
    pub line_search_shrink: f64,
    /// Absolute tolerance of the hull membership test.
    pub hull_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 100,
            hessian_ridge: 1e-12,
            line_search_shrink: 0.5,
            hull_tol: geometry::DEFAULT_HULL_TOL,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("solver tol must be > 0, got {}", self.tol)));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("solver max_iter must be >= 1".into()));
        }
        if !(self.hessian_ridge >= 0.0) {
            return Err(Error::Config("hessian_ridge must be >= 0".into()));
        }
        if !(self.line_search_shrink > 0.0 && self.line_search_shrink < 1.0) {
            return Err(Error::Config("line_search_shrink must lie in (0, 1)".into()));
        }
        if !(self.hull_tol > 0.0) {
            return Err(Error::Config("hull_tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Gaussian prior weights `mᵢ = exp(-β‖x̃ᵢ‖²)`, kept in log form so that
/// far nodes at large `β` do not underflow.
#[derive(Debug, Clone, PartialEq)]
pub struct Prior {
    pub beta: f64,
    log_values: Vec<f64>,
}

impl Prior {
    pub fn new(beta: f64, shifted: &ShiftedNodes) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::Domain(format!("beta must be finite and >= 0, got {beta}")));
        }
        let log_values = (0..shifted.len())
            .map(|i| if beta == 0.0 { 0.0 } else { -beta * shifted.norm_sq(i) })
            .collect();
        Ok(Prior { beta, log_values })
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }
}

/// Basis weights at one query point, with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEval {
    pub weights: Vec<f64>,
    pub lambda: Vec<f64>,
    /// ∞-norm of `Σ ψᵢ x̃ᵢ` at the returned multipliers.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub membership: Membership,
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if let Some(v) = p.iter().find(|&&v| v < -1e-14 || !v.is_finite()) {
        return Err(Error::Domain(format!("invalid probability weight {v}")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-12 * (p.len().max(1) as f64) {
        return Err(Error::Domain(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Shannon entropy `-Σ pᵢ log pᵢ` with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    check_distribution(p)?;
    Ok(-p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>())
}

/// Relative entropy `Σ ψᵢ log(ψᵢ/mᵢ)` with `0 log 0 = 0`.
pub fn relative_entropy(p: &[f64], prior: &[f64]) -> Result<f64> {
    check_distribution(p)?;
    if p.len() != prior.len() {
        return Err(Error::Dimension {
            expected: p.len(),
            found: prior.len(),
        });
    }
    if let Some(m) = prior.iter().find(|&&m| !(m > 0.0)) {
        return Err(Error::Domain(format!("prior entries must be positive, got {m}")));
    }
    Ok(p.iter()
        .zip(prior)
        .filter(|(&v, _)| v > 0.0)
        .map(|(v, m)| v * (v / m).ln())
        .sum())
}

/// Value, gradient and Hessian of the dual `log Z(λ)`, plus the weights.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    pub weights: Vec<f64>,
}

fn dual_weights(lambda: &[f64], shifted: &ShiftedNodes, prior: &Prior) -> (f64, Vec<f64>) {
    let n = shifted.len();
    let mut expo = Vec::with_capacity(n);
    for (i, col) in shifted.tilde.column_iter().enumerate() {
        let dot: f64 = col.iter().zip(lambda).map(|(a, b)| a * b).sum();
        expo.push(prior.log_values[i] - dot);
    }
    let top = expo.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for e in expo.iter_mut() {
        *e = (*e - top).exp();
        z += *e;
    }
    for e in expo.iter_mut() {
        *e /= z;
    }
    (top + z.ln(), expo)
}

fn dual_value(lambda: &[f64], shifted: &ShiftedNodes, prior: &Prior) -> f64 {
    dual_weights(lambda, shifted, prior).0
}

pub fn dual_objective(lambda: &[f64], shifted: &ShiftedNodes, prior: &Prior) -> DualEval {
    let d = shifted.dim();
    let (value, weights) = dual_weights(lambda, shifted, prior);
    let mut mean = DVector::zeros(d);
    let mut second = DMatrix::zeros(d, d);
    for (col, &w) in shifted.tilde.column_iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        mean.axpy(w, &col, 1.0);
        second.ger(w, &col, &col, 1.0);
    }
    let hessian = second - &mean * mean.transpose();
    DualEval {
        value,
        gradient: -mean,
        hessian,
        weights,
    }
}

fn newton_direction(
    hessian: &DMatrix<f64>,
    gradient: &DVector<f64>,
    ridge: f64,
    floor: f64,
) -> DVector<f64> {
    let d = hessian.nrows();
    // With a fully concentrated basis the Hessian vanishes; fall back to the
    // node spread so the ridge keeps a sensible scale.
    let scale = (hessian.trace() / d as f64).max(floor * f64::EPSILON).max(f64::MIN_POSITIVE);
    let mut shift = ridge * scale;
    for _ in 0..40 {
        let h = hessian + DMatrix::identity(d, d) * shift;
        if let Some(ch) = h.cholesky() {
            let dir = -ch.solve(gradient);
            if dir.iter().all(|v| v.is_finite()) {
                return dir;
            }
        }
        shift = if shift == 0.0 { scale } else { shift * 10.0 };
    }
    -gradient / scale
}

/// Solves the dual for shifted nodes that are already known to contain the
/// origin in their hull.
fn solve_shifted(shifted: &ShiftedNodes, prior: &Prior, opts: &SolverOptions) -> (Vec<f64>, DualEval, usize) {
    let d = shifted.dim();
    let mut lambda = vec![0.0; d];
    let mut eval = dual_objective(&lambda, shifted, prior);
    let mut best = (lambda.clone(), eval.clone(), eval.gradient.amax());
    let mut iterations = 0;
    let spread = (0..shifted.len()).map(|i| shifted.norm_sq(i)).fold(0.0, f64::max);

    while iterations < opts.max_iter {
        let gnorm = eval.gradient.amax();
        if gnorm <= opts.tol || lambda.iter().any(|v| v.abs() > LAMBDA_LIMIT) {
            break;
        }
        iterations += 1;
        let dir = newton_direction(&eval.hessian, &eval.gradient, opts.hessian_ridge, spread);
        let slope = eval.gradient.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        // When the Hessian is nearly singular the raw Newton step can be
        // astronomically long, so backtrack on the step length, not on t.
        let dir_norm = dir.amax();
        let lambda_norm = lambda.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        while step * dir_norm > 1e-14 * (1.0 + lambda_norm) {
            let trial: Vec<f64> = lambda.iter().zip(dir.iter()).map(|(l, p)| l + step * p).collect();
            let value = dual_value(&trial, shifted, prior);
            if value <= eval.value + ARMIJO_C * step * slope.min(0.0) {
                accepted = Some(trial);
                break;
            }
            step *= opts.line_search_shrink;
        }
        // Near the optimum the value stalls at rounding level; accept a full
        // step if it still reduces the gradient.
        let trial = match accepted {
            Some(t) => t,
            None => {
                let t: Vec<f64> = lambda.iter().zip(dir.iter()).map(|(l, p)| l + p).collect();
                let e = dual_objective(&t, shifted, prior);
                if e.gradient.amax() < gnorm {
                    t
                } else {
                    break;
                }
            }
        };
        lambda = trial;
        eval = dual_objective(&lambda, shifted, prior);
        let g = eval.gradient.amax();
        if g < best.2 {
            best = (lambda.clone(), eval.clone(), g);
        }
    }
    // one polishing step: the tolerance bounds the gradient, not the weights
    if best.2 <= opts.tol && best.2 > 0.0 {
        let dir = newton_direction(&best.1.hessian, &best.1.gradient, opts.hessian_ridge, spread);
        let t: Vec<f64> = best.0.iter().zip(dir.iter()).map(|(l, p)| l + p).collect();
        let e = dual_objective(&t, shifted, prior);
        if e.gradient.amax() < best.2 {
            best = (t, e.clone(), e.gradient.amax());
        }
    }
    (best.0, best.1, iterations)
}

/// Local max-ent basis of `x` with respect to `nodes` at locality `beta`.
pub fn solve_basis(nodes: &NodeSet, x: &[f64], beta: f64, opts: &SolverOptions) -> Result<BasisEval> {
    opts.validate()?;
    let hull = in_hull(nodes, x, opts.hull_tol)?;
    if hull.status == Membership::Outside {
        return Err(Error::OutsideHull {
            index: None,
            point: x.to_vec(),
        });
    }
    let shifted = shift(nodes, x)?;
    let prior = Prior::new(beta, &shifted)?;
    let (lambda, eval, iterations) = solve_shifted(&shifted, &prior, opts);
    let residual = eval.gradient.amax();
    Ok(BasisEval {
        weights: eval.weights,
        lambda,
        residual,
        iterations,
        converged: residual <= opts.tol,
        membership: hull.status,
    })
}

/// Global max-ent basis, i.e. [`solve_basis`] with a uniform prior.
pub fn solve_basis_global(nodes: &NodeSet, x: &[f64], opts: &SolverOptions) -> Result<BasisEval> {
    solve_basis(nodes, x, 0.0, opts)
}

/// Per-row solver diagnostics of a [`BasisMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostics {
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    /// `n_q × n_B`; row `i` holds the basis weights of query `i`.
    pub matrix: DMatrix<f64>,
    pub diagnostics: Vec<RowDiagnostics>,
}

impl BasisMatrix {
    pub fn failed_rows(&self) -> Vec<usize> {
        self.diagnostics
            .iter()
            .enumerate()
            .filter(|(_, d)| !d.converged)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Evaluates the basis at every query. Rows are independent and may be
/// computed in parallel; the result does not depend on the thread count.
pub fn basis_matrix<Q: AsRef<[f64]> + Sync>(
    nodes: &NodeSet,
    queries: &[Q],
    beta: f64,
    opts: &SolverOptions,
) -> Result<BasisMatrix> {
    opts.validate()?;
    let rows: Vec<Result<BasisEval>> = queries
        .par_iter()
        .map(|q| solve_basis(nodes, q.as_ref(), beta, opts))
        .collect();
    let n = nodes.len();
    let mut matrix = DMatrix::zeros(queries.len(), n);
    let mut diagnostics = Vec::with_capacity(queries.len());
    for (i, row) in rows.into_iter().enumerate() {
        let eval = row.map_err(|e| match e {
            Error::OutsideHull { point, .. } => Error::OutsideHull {
                index: Some(i),
                point,
            },
            other => other,
        })?;
        for (j, w) in eval.weights.iter().enumerate() {
            matrix[(i, j)] = *w;
        }
        diagnostics.push(RowDiagnostics {
            residual: eval.residual,
            iterations: eval.iterations,
            converged: eval.converged,
        });
    }
    Ok(BasisMatrix { matrix, diagnostics })
}
