use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown mode `{0}`")]
    UnknownMode(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("vanishing energy denominator at intermediate state {state}")]
    Singularity { state: String },

    #[error("no dynamics: {0}")]
    NoDynamics(String),

    #[error("matrix is not unitary (defect {defect:e} exceeds tolerance {tol:e})")]
    NotUnitary { defect: f64, tol: f64 },

    #[error("ill-conditioned fit (condition number {0:e})")]
    IllConditioned(f64),

    #[error("validation error in `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures of the numerics themselves (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singularity { .. }
                | Error::NoDynamics(_)
                | Error::NotUnitary { .. }
                | Error::IllConditioned(_)
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
