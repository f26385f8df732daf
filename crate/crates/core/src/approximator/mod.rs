//! Approximants `f̂(x) = aᵀΨ(x)` fitted on a max-ent basis.
//!
//! Coefficients minimize `‖ε‖₂ + α‖a‖₁` with `εᵢ = f(yᵢ) − aᵀΨ(yᵢ)`. With
//! `α = 0` this is plain least squares, solved directly with a minimum-norm
//! SVD solution; `α > 0` goes through the proximal solver in [`l1`].

pub mod l1;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{NodeSet, Point};
use crate::maxent::{basis_matrix, solve_basis, BasisMatrix, SolverOptions};

/// Sample points with `m` observed values each.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Point>,
    values: DMatrix<f64>,
}

impl Dataset {
    pub fn new(points: Vec<Point>, values: DMatrix<f64>) -> Result<Self> {
        if points.len() != values.nrows() {
            return Err(Error::Domain(format!(
                "{} points but {} value rows",
                points.len(),
                values.nrows()
            )));
        }
        if let Some(p) = points.first() {
            let d = p.dim();
            if let Some(q) = points.iter().find(|q| q.dim() != d) {
                return Err(Error::Dimension {
                    expected: d,
                    found: q.dim(),
                });
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset values must be finite".into()));
        }
        Ok(Dataset { points, values })
    }

    /// A dataset with one value per point.
    pub fn scalar(points: Vec<Point>, values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Dataset::new(points, DMatrix::from_vec(n, 1, values))
    }

    pub fn from_rows(points: Vec<Vec<f64>>, values: Vec<Vec<f64>>) -> Result<Self> {
        let m = values.first().map_or(1, Vec::len);
        if values.iter().any(|r| r.len() != m) {
            return Err(Error::Domain("ragged value rows".into()));
        }
        let n = values.len();
        let flat: Vec<f64> = values.into_iter().flatten().collect();
        Dataset::new(
            points.into_iter().map(Point::new).collect::<Result<_>>()?,
            DMatrix::from_row_slice(n, m, &flat),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.points.first().map(Point::dim)
    }

    pub fn n_outputs(&self) -> usize {
        self.values.ncols()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.values.column(j).into_owned()
    }

    /// Same points with a subset of value columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Dataset> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.n_outputs()) {
            return Err(Error::Domain(format!("no value column {c}")));
        }
        Dataset::new(self.points.clone(), self.values.select_columns(cols))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub training_rms: f64,
    /// `‖ε‖₂ + α‖a‖₁` at the returned coefficients.
    pub objective: f64,
    /// Iterations of the l1 solver; zero for the direct least-squares path.
    pub solver_iterations: usize,
    /// Most Newton iterations spent on any single basis evaluation.
    pub basis_iterations: usize,
}

/// A fitted scalar approximant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approximant {
    pub nodes: NodeSet,
    pub beta: f64,
    pub alpha: f64,
    pub coefficients: Vec<f64>,
    pub fit_report: FitReport,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn rms(residual: &DVector<f64>) -> f64 {
    if residual.is_empty() {
        0.0
    } else {
        (residual.norm_squared() / residual.len() as f64).sqrt()
    }
}

/// Evaluates the basis at every data point, failing if any solve does not
/// converge.
pub(crate) fn training_basis(
    nodes: &NodeSet,
    data: &Dataset,
    beta: f64,
    opts: &SolverOptions,
) -> Result<BasisMatrix> {
    if data.is_empty() {
        return Err(Error::Domain("training dataset is empty".into()));
    }
    let basis = basis_matrix(nodes, data.points(), beta, opts)?;
    let failed = basis.failed_rows();
    if !failed.is_empty() {
        return Err(Error::Fit {
            failed,
            component: None,
        });
    }
    Ok(basis)
}

/// Fits one coefficient vector against a precomputed basis matrix.
pub(crate) fn fit_column(
    basis: &BasisMatrix,
    values: &DVector<f64>,
    alpha: f64,
) -> Result<(Vec<f64>, FitReport)> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let phi = &basis.matrix;
    let (direct, _) = l1::least_squares_min_norm(phi, values);
    let (coeffs, iterations) = if alpha == 0.0 {
        (direct, 0)
    } else {
        let sol = l1::solve_l1(phi, values, alpha, &direct, &l1::L1Options::default());
        (sol.coefficients, sol.iterations)
    };
    if coeffs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("fitted coefficients are not finite".into()));
    }
    let residual = values - phi * &coeffs;
    let report = FitReport {
        training_rms: rms(&residual),
        objective: residual.norm() + alpha * coeffs.lp_norm(1),
        solver_iterations: iterations,
        basis_iterations: basis.diagnostics.iter().map(|d| d.iterations).max().unwrap_or(0),
    };
    Ok((coeffs.as_slice().to_vec(), report))
}

/// Fits `a*` for a scalar dataset.
pub fn fit(nodes: &NodeSet, data: &Dataset, beta: f64, alpha: f64, opts: &SolverOptions) -> Result<Approximant> {
    if data.n_outputs() != 1 {
        return Err(Error::Domain(format!(
            "scalar fit needs one value column, got {}",
            data.n_outputs()
        )));
    }
    let basis = training_basis(nodes, data, beta, opts)?;
    let (coefficients, fit_report) = fit_column(&basis, &data.column(0), alpha)?;
    Ok(Approximant {
        nodes: nodes.clone(),
        beta,
        alpha,
        coefficients,
        fit_report,
        solver: *opts,
    })
}

/// `aᵀψ` for a given weight vector.
pub fn combine(coefficients: &[f64], weights: &[f64]) -> f64 {
    coefficients.iter().zip(weights).map(|(a, w)| a * w).sum()
}

/// Evaluates the approximant at `x`; the basis is re-solved for every query.
pub fn predict(model: &Approximant, x: &[f64]) -> Result<f64> {
    let eval = solve_basis(&model.nodes, x, model.beta, &model.solver)?;
    if !eval.converged {
        return Err(Error::NotConverged {
            residual: eval.residual,
            iterations: eval.iterations,
        });
    }
    Ok(combine(&model.coefficients, &eval.weights))
}

pub fn rms_error(model: &Approximant, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Domain("cannot compute RMS over an empty dataset".into()));
    }
    if data.n_outputs() != 1 {
        return Err(Error::Domain("rms_error needs a scalar dataset".into()));
    }
    let mut sum = 0.0;
    for (i, p) in data.points().iter().enumerate() {
        let pred = predict(model, p).map_err(|e| match e {
            Error::OutsideHull { point, .. } => Error::OutsideHull {
                index: Some(i),
                point,
            },
            other => other,
        })?;
        let err = data.values()[(i, 0)] - pred;
        sum += err * err;
    }
    Ok((sum / data.len() as f64).sqrt())
}

/// Indices whose coefficient magnitude exceeds `threshold · max |a*|`.
pub fn active_nodes(model: &Approximant, threshold: f64) -> Result<Vec<usize>> {
    active_indices(&model.coefficients, threshold)
}

pub fn active_indices(coefficients: &[f64], threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0) {
        return Err(Error::Domain(format!("threshold must be > 0, got {threshold}")));
    }
    let top = coefficients.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    if top == 0.0 {
        return Ok(Vec::new());
    }
    Ok(coefficients
        .iter()
        .enumerate()
        .filter(|(_, a)| a.abs() > threshold * top)
        .map(|(i, _)| i)
        .collect())
}
