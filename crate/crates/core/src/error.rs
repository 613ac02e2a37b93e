use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solvers, the optimizer and the experiment drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameters or grids that violate a type invariant.
    #[error("invalid `{key}`: {constraint}")]
    Config { key: String, constraint: String },

    /// Linear solve failed to reach its tolerance.
    #[error("linear solver failed at step {step}: {reason} (iterations {iterations}, residual {residual:.3e})")]
    LinearSolve {
        step: usize,
        reason: String,
        iterations: usize,
        residual: f64,
    },

    /// A runtime invariant was broken (e.g. coefficient outside its band).
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// Fixed-point iteration did not converge.
    #[error("{what} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// Hausdorff distance between two empty sets.
    #[error("distance between two empty sets is undefined")]
    UndefinedDistance,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            constraint: constraint.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
