//! Vector-field surrogates built component-wise on a shared max-ent basis,
//! and fixed-step RK4 rollouts.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approximator::{combine, fit_column, training_basis, Dataset, FitReport};
use crate::error::{Error, Result};
use crate::geometry::NodeSet;
use crate::maxent::{solve_basis, SolverOptions};

/// Something that maps a state to its time derivative.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// Wraps a closure as a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FnField<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x))
    }
}

/// `m` approximants sharing one node set; `coefficients[j]` is `a_j*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub nodes: NodeSet,
    pub beta: f64,
    pub alpha: f64,
    pub coefficients: Vec<Vec<f64>>,
    pub fit_reports: Vec<FitReport>,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl SurrogateModel {
    pub fn n_outputs(&self) -> usize {
        self.coefficients.len()
    }

    /// `n_B × m` coefficient matrix.
    pub fn coeff_matrix(&self) -> DMatrix<f64> {
        let n = self.nodes.len();
        DMatrix::from_fn(n, self.n_outputs(), |i, j| self.coefficients[j][i])
    }
}

impl VectorField for SurrogateModel {
    fn dim(&self) -> usize {
        self.nodes.dim()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        eval_field(self, x)
    }
}

/// Fits every value column against one cached basis matrix. Works for any
/// number of outputs; [`fit_dynamics`] additionally requires `m = d`.
pub fn fit_outputs(
    nodes: &NodeSet,
    data: &Dataset,
    beta: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<SurrogateModel> {
    let basis = training_basis(nodes, data, beta, opts)?;
    let mut coefficients = Vec::with_capacity(data.n_outputs());
    let mut fit_reports = Vec::with_capacity(data.n_outputs());
    for j in 0..data.n_outputs() {
        let (a, report) = fit_column(&basis, &data.column(j), alpha).map_err(|e| match e {
            Error::Fit { failed, .. } => Error::Fit {
                failed,
                component: Some(j),
            },
            other => other,
        })?;
        coefficients.push(a);
        fit_reports.push(report);
    }
    Ok(SurrogateModel {
        nodes: nodes.clone(),
        beta,
        alpha,
        coefficients,
        fit_reports,
        solver: *opts,
    })
}

/// Builds `f̂` from `(yᵢ, ẏᵢ)` pairs: column `j` of the values holds `ẏ(j)`.
pub fn fit_dynamics(
    nodes: &NodeSet,
    data: &Dataset,
    beta: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<SurrogateModel> {
    let d = nodes.dim();
    if data.n_outputs() != d {
        return Err(Error::Dimension {
            expected: d,
            found: data.n_outputs(),
        });
    }
    fit_outputs(nodes, data, beta, alpha, opts)
}

/// One basis solve followed by `m` inner products.
pub fn eval_field(model: &SurrogateModel, x: &[f64]) -> Result<Vec<f64>> {
    let eval = solve_basis(&model.nodes, x, model.beta, &model.solver)?;
    if !eval.converged {
        return Err(Error::NotConverged {
            residual: eval.residual,
            iterations: eval.iterations,
        });
    }
    Ok(model
        .coefficients
        .iter()
        .map(|a| combine(a, &eval.weights))
        .collect())
}

/// Sampled states on a strictly increasing time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::Domain(format!(
                "{} times but {} states",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("trajectory times must be strictly increasing".into()));
        }
        if let Some(s) = states.first() {
            let d = s.len();
            if states.iter().any(|s| s.len() != d) {
                return Err(Error::Domain("ragged trajectory states".into()));
            }
        }
        if states.iter().flatten().chain(&times).any(|v| !v.is_finite()) {
            return Err(Error::Domain("trajectory must be finite".into()));
        }
        Ok(Trajectory { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// Every `stride`-th sample, starting with the first.
    pub fn subsample(&self, stride: usize) -> Trajectory {
        let stride = stride.max(1);
        Trajectory {
            times: self.times.iter().step_by(stride).copied().collect(),
            states: self.states.iter().step_by(stride).cloned().collect(),
        }
    }

    /// The first `n` samples.
    pub fn truncate(&self, n: usize) -> Trajectory {
        let n = n.min(self.len());
        Trajectory {
            times: self.times[..n].to_vec(),
            states: self.states[..n].to_vec(),
        }
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        self.states.last().map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Error)]
pub enum IntegrateError {
    #[error(transparent)]
    Invalid(#[from] Error),
    /// A stage point left the domain of a surrogate field.
    #[error("trajectory left the model domain after t = {time}")]
    DomainExit {
        time: f64,
        state: Vec<f64>,
        partial: Trajectory,
    },
    #[error("numerical blowup after t = {time}")]
    NumericalBlowup {
        time: f64,
        state: Vec<f64>,
        partial: Trajectory,
    },
}

impl IntegrateError {
    pub fn partial(&self) -> Option<&Trajectory> {
        match self {
            IntegrateError::Invalid(_) => None,
            IntegrateError::DomainExit { partial, .. } | IntegrateError::NumericalBlowup { partial, .. } => {
                Some(partial)
            }
        }
    }
}

/// The time grid `t0, t0+dt, …` ending exactly at `t1`.
pub fn time_grid(t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    if !(t1 > t0) {
        return Err(Error::Domain(format!("empty time span ({t0}, {t1})")));
    }
    let steps = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..steps).map(|k| t0 + k as f64 * dt).collect();
    times.push(t1);
    Ok(times)
}

/// Classical fixed-step RK4 from `x0` over `[t0, t1]`; the last step is
/// shortened to land on `t1`.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    t_span: (f64, f64),
    dt: f64,
) -> std::result::Result<Trajectory, IntegrateError> {
    let d = field.dim();
    if x0.len() != d {
        return Err(Error::Dimension {
            expected: d,
            found: x0.len(),
        }
        .into());
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("initial state must be finite".into()).into());
    }
    let times = time_grid(t_span.0, t_span.1, dt)?;
    // the initial state must be admissible; afterwards failures end the rollout
    let mut k1 = field.eval(x0)?;

    let mut states = Vec::with_capacity(times.len());
    states.push(x0.to_vec());
    let mut x = DVector::from_column_slice(x0);

    for w in times.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let stop = |e: Error, states: &Vec<Vec<f64>>| -> IntegrateError {
            let partial = Trajectory {
                times: times[..states.len()].to_vec(),
                states: states.clone(),
            };
            let state = states.last().cloned().unwrap_or_default();
            match e {
                Error::OutsideHull { .. } => IntegrateError::DomainExit { time: t, state, partial },
                Error::NotConverged { .. } => IntegrateError::NumericalBlowup { time: t, state, partial },
                other => IntegrateError::Invalid(other),
            }
        };
        let stage = |k: &[f64], c: f64| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + c * h * ki).collect() };
        let a1 = DVector::from_vec(k1.clone());
        let k2 = field.eval(&stage(&k1, 0.5)).map_err(|e| stop(e, &states))?;
        let k3 = field.eval(&stage(&k2, 0.5)).map_err(|e| stop(e, &states))?;
        let k4 = field.eval(&stage(&k3, 1.0)).map_err(|e| stop(e, &states))?;
        let incr = (a1 + DVector::from_vec(k2) * 2.0 + DVector::from_vec(k3) * 2.0 + DVector::from_vec(k4)) * (h / 6.0);
        let next = &x + incr;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(IntegrateError::NumericalBlowup {
                time: t,
                state: x.as_slice().to_vec(),
                partial: Trajectory {
                    times: times[..states.len()].to_vec(),
                    states,
                },
            });
        }
        x = next;
        states.push(x.as_slice().to_vec());
        if states.len() < times.len() {
            k1 = field.eval(x.as_slice()).map_err(|e| {
                let mut shown = states.clone();
                shown.pop();
                let mut err = stop(e, &shown);
                // the state itself is valid; report it as the last good sample
                if let IntegrateError::DomainExit { time, state, partial }
                | IntegrateError::NumericalBlowup { time, state, partial } = &mut err
                {
                    *time = w[1];
                    *state = x.as_slice().to_vec();
                    partial.times.push(w[1]);
                    partial.states.push(x.as_slice().to_vec());
                }
                err
            })?;
        }
    }
    Ok(Trajectory { times, states })
}

/// RMS over all samples and components; the time grids must match.
pub fn trajectory_rms(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Domain(format!(
            "trajectory grids differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let scale = a.times.iter().fold(1.0_f64, |m, t| m.max(t.abs()));
    if a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-12 * scale) {
        return Err(Error::Domain("trajectory time grids differ".into()));
    }
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let mut sum = 0.0;
    for (x, y) in a.states.iter().zip(&b.states) {
        for (u, v) in x.iter().zip(y) {
            sum += (u - v) * (u - v);
        }
    }
    Ok((sum / (a.len() * a.dim()) as f64).sqrt())
}

/// Per-sample `|r²θ̇ − h₀| / h₀` for states ordered `(r, ṙ, θ, θ̇)`.
pub fn angular_momentum_error(traj: &Trajectory, h0: f64) -> Result<Vec<f64>> {
    if !(h0 > 0.0) {
        return Err(Error::Domain(format!("reference angular momentum must be > 0, got {h0}")));
    }
    if traj.dim() != 4 {
        return Err(Error::Dimension {
            expected: 4,
            found: traj.dim(),
        });
    }
    traj.states
        .iter()
        .map(|s| {
            let (r, theta_dot) = (s[0], s[3]);
            if !(r > 0.0) {
                return Err(Error::Domain(format!("nonpositive radius {r}")));
            }
            Ok((r * r * theta_dot - h0).abs() / h0)
        })
        .collect()
}
