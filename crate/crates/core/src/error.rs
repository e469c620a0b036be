use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = HbfError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HbfError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: String },

    #[error("{what} is ill-conditioned (condition number {cond:.3e})")]
    IllConditioned { what: String, cond: f64 },

    #[error("non-positive scale factor {value:.3e} on subcarrier {k}")]
    NonPositiveScale { k: usize, value: f64 },

    #[error("subproblem data is inconsistent: {0}")]
    NonHermitian(String),

    #[error(
        "monotonicity violated at outer iteration {outer}, step {step}: {before:.12e} -> {after:.12e}"
    )]
    Monotonicity {
        outer: usize,
        step: String,
        before: f64,
        after: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl HbfError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HbfError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised by the runtime invariant guards.
    pub fn is_invariant_abort(&self) -> bool {
        matches!(
            self,
            HbfError::Monotonicity { .. }
                | HbfError::NonHermitian(_)
                | HbfError::NotPositiveDefinite { .. }
                | HbfError::IllConditioned { .. }
                | HbfError::NonPositiveScale { .. }
        )
    }
}
