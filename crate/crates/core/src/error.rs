use std::path::PathBuf;

use crate::field::Hyperparameters;
use crate::gaussian::GaussianField;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid station config: {0}")]
    InvalidConfig(String),

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("location sets differ: {0}")]
    GridMismatch(String),

    #[error("{matrix} is not positive definite (factorization failed after jitter)")]
    NotPositiveDefinite { matrix: String },

    #[error("matrix is not positive semi-definite: eigenvalue {eigenvalue:e} below clamp threshold {threshold:e}")]
    NotPsd { eigenvalue: f64, threshold: f64 },

    #[error("negative variance {0:e}")]
    NegativeVariance(f64),

    #[error("squared distance {value:e} is negative beyond roundoff (scale {scale:e})")]
    NegativeDistance { value: f64, scale: f64 },

    #[error(
        "MAP optimisation did not converge in any restart (best objective {best_objective}, gradient norm {gradient_norm:e})"
    )]
    MapNonConvergence {
        best: Box<Hyperparameters>,
        best_objective: f64,
        gradient_norm: f64,
    },

    #[error("barycenter fixed point did not converge after {iterations} iterations (residual {residual:e}, weights {weights:?})")]
    BarycenterNonConvergence {
        iterations: usize,
        residual: f64,
        weights: Vec<f64>,
        last: Box<GaussianField>,
    },

    #[error("quadrature did not reach tolerance {tolerance:e}: estimate {estimate}, error bound {error_bound:e}")]
    Quadrature {
        estimate: f64,
        error_bound: f64,
        tolerance: f64,
    },

    #[error("area-average mean {value:e} of {which} is too close to zero (epsilon {epsilon:e})")]
    NearZeroAreaAverage {
        which: String,
        value: f64,
        epsilon: f64,
    },

    #[error("failed to fit dataset `{label}`: {source}")]
    FitFailed {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (factorizations, solvers,
    /// quadrature) as opposed to malformed inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::NotPsd { .. }
            | Error::NegativeVariance(_)
            | Error::NegativeDistance { .. }
            | Error::MapNonConvergence { .. }
            | Error::BarycenterNonConvergence { .. }
            | Error::Quadrature { .. } => true,
            Error::FitFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
