use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A query point lies outside the convex hull of the basis nodes.
    /// `index` identifies the offending row of a batch when there is one.
    #[error("point {point:?} lies outside the node hull{}", index.map(|i| format!(" (row {i})")).unwrap_or_default())]
    OutsideHull {
        index: Option<usize>,
        point: Vec<f64>,
    },

    /// The basis solver did not converge at one or more data points.
    #[error("basis solver failed at {} point(s): {failed:?}{}", failed.len(), component.map(|c| format!(" (component {c})")).unwrap_or_default())]
    Fit {
        failed: Vec<usize>,
        component: Option<usize>,
    },

    #[error("basis solver did not converge (residual {residual:e} after {iterations} iterations)")]
    NotConverged { residual: f64, iterations: usize },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
