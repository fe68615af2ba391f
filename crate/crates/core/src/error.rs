use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimators and the benchmark harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("coefficient is undefined: {0}")]
    Undefined(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("unsupported design: {0}")]
    Unsupported(String),

    #[error("ill-conditioned covariance (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("covariance iterate is singular at iteration {iteration}")]
    SingularIterate { iteration: usize },

    #[error("basis matrices are linearly dependent")]
    DependentBases,

    #[error("regressors are collinear")]
    Collinear,

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the data.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. }
                | Error::SingularIterate { .. }
                | Error::DependentBases
                | Error::LineSearch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
