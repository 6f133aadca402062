use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} = {value} exceeds the configured limit {limit}; reduce the retained dimensions (L, J) or raise the guard")]
    TooLarge {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0} is not positive semidefinite (eigenvalue {1:e})")]
    NotPsd(&'static str, f64),

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("{what} is numerically singular at iteration {iteration} (condition number {condition:e})")]
    Singular {
        what: &'static str,
        iteration: usize,
        condition: f64,
    },

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NotPsd(..)
                | Error::NotPositiveDefinite(_)
                | Error::Singular { .. }
                | Error::NoConvergence(_)
        )
    }
}
