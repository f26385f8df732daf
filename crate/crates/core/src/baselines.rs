//! Sparse dictionary regression baseline: a fixed library of monomials and
//! optional trigonometric terms, fitted by sequentially thresholded least
//! squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::approximator::l1::least_squares_min_norm;
use crate::approximator::Dataset;
use crate::dynamics::VectorField;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.05;
pub const DEFAULT_SWEEPS: usize = 10;

/// Library of candidate functions in `dim` variables: the constant, all
/// monomials up to total degree `degree`, then `sin(ωxₖ)` and `cos(ωxₖ)` for
/// each frequency `ω` and coordinate `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub dim: usize,
    pub degree: usize,
    #[serde(default)]
    pub trig_frequencies: Vec<f64>,
}

impl Dictionary {
    pub fn new(dim: usize, degree: usize, trig_frequencies: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("dictionary dimension must be >= 1".into()));
        }
        if trig_frequencies.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config("trigonometric frequencies must be finite".into()));
        }
        Ok(Dictionary {
            dim,
            degree,
            trig_frequencies,
        })
    }

    /// Exponent vectors, grouped by total degree.
    pub fn exponents(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for total in 0..=self.degree {
            let mut current = vec![0; self.dim];
            compositions(total, 0, &mut current, &mut out);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.exponents().len() + 2 * self.dim * self.trig_frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .exponents()
            .iter()
            .map(|e| {
                let parts: Vec<String> = e
                    .iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0)
                    .map(|(k, &p)| if p == 1 { format!("x{}", k + 1) } else { format!("x{}^{p}", k + 1) })
                    .collect();
                if parts.is_empty() {
                    "1".to_string()
                } else {
                    parts.join("*")
                }
            })
            .collect();
        for w in &self.trig_frequencies {
            for k in 0..self.dim {
                names.push(format!("sin({w}*x{})", k + 1));
                names.push(format!("cos({w}*x{})", k + 1));
            }
        }
        names
    }

    pub fn features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut out: Vec<f64> = self
            .exponents()
            .iter()
            .map(|e| e.iter().zip(x).map(|(&p, &v)| v.powi(p as i32)).product())
            .collect();
        for &w in &self.trig_frequencies {
            for &v in x {
                out.push((w * v).sin());
                out.push((w * v).cos());
            }
        }
        Ok(out)
    }

    pub fn matrix(&self, points: &[impl AsRef<[f64]>]) -> Result<DMatrix<f64>> {
        let rows: Vec<Vec<f64>> = points.iter().map(|p| self.features(p.as_ref())).collect::<Result<_>>()?;
        let n = self.len();
        Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
    }
}

// exponent vectors summing to `left`, in lexicographically decreasing order
fn compositions(left: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if k + 1 == current.len() {
        current[k] = left;
        out.push(current.clone());
        return;
    }
    for p in (0..=left).rev() {
        current[k] = p;
        compositions(left - p, k + 1, current, out);
    }
    current[k] = 0;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryModel {
    pub dictionary: Dictionary,
    pub threshold: f64,
    /// `coefficients[j]` weights the dictionary for output `j`.
    pub coefficients: Vec<Vec<f64>>,
    /// Outputs whose thresholding removed every term.
    pub empty_outputs: Vec<usize>,
}

impl DictionaryModel {
    pub fn active_terms(&self, output: usize) -> Vec<usize> {
        self.coefficients[output]
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, _)| i)
            .collect()
    }
}

fn stlsq(theta: &DMatrix<f64>, f: &DVector<f64>, threshold: f64, sweeps: usize) -> DVector<f64> {
    let n = theta.ncols();
    let (mut coef, _) = least_squares_min_norm(theta, f);
    let mut support: Vec<bool> = vec![true; n];
    for _ in 0..sweeps {
        let next: Vec<bool> = coef.iter().map(|c| c.abs() >= threshold).collect();
        if next == support {
            break;
        }
        support = next;
        let cols: Vec<usize> = (0..n).filter(|&i| support[i]).collect();
        coef = DVector::zeros(n);
        if cols.is_empty() {
            break;
        }
        let (sub, _) = least_squares_min_norm(&theta.select_columns(&cols), f);
        for (c, v) in cols.iter().zip(sub.iter()) {
            coef[*c] = *v;
        }
    }
    // terms below threshold after the last sweep are still dropped
    coef.map(|c| if c.abs() >= threshold { c } else { 0.0 })
}

/// Fits every output column of `data` with thresholded least squares.
pub fn dict_fit(dictionary: &Dictionary, data: &Dataset, threshold: f64, sweeps: usize) -> Result<DictionaryModel> {
    if data.is_empty() {
        return Err(Error::Domain("training dataset is empty".into()));
    }
    if !(threshold >= 0.0) || !threshold.is_finite() {
        return Err(Error::Config(format!("threshold must be finite and >= 0, got {threshold}")));
    }
    let theta = dictionary.matrix(data.points())?;
    let mut coefficients = Vec::with_capacity(data.n_outputs());
    let mut empty_outputs = Vec::new();
    for j in 0..data.n_outputs() {
        let c = stlsq(&theta, &data.column(j), threshold, sweeps);
        if c.iter().all(|v| *v == 0.0) {
            log::warn!("dictionary fit for output {j} kept no terms");
            empty_outputs.push(j);
        }
        coefficients.push(c.as_slice().to_vec());
    }
    Ok(DictionaryModel {
        dictionary: dictionary.clone(),
        threshold,
        coefficients,
        empty_outputs,
    })
}

pub fn dict_predict(model: &DictionaryModel, x: &[f64]) -> Result<Vec<f64>> {
    let phi = model.dictionary.features(x)?;
    Ok(model
        .coefficients
        .iter()
        .map(|c| c.iter().zip(&phi).map(|(a, b)| a * b).sum())
        .collect())
}

impl VectorField for DictionaryModel {
    fn dim(&self) -> usize {
        self.dictionary.dim
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        dict_predict(self, x)
    }
}
