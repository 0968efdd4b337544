use thiserror::Error;

/// Errors raised across the library.
///
/// Each variant maps onto one of three broad classes (see [`ErrorClass`]) which the
/// command-line front-end turns into process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("target error {target} is outside the reachable range ({low}, {high})")]
    OutOfRange { target: f64, low: f64, high: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: field `{field}`: {message}")]
    Validation {
        line: usize,
        field: &'static str,
        message: String,
    },

    #[error("duplicate measurement key {0}")]
    DuplicateKey(String),

    #[error("no unpruned error for configuration(s): {}", .0.join(", "))]
    MissingUnpruned(Vec<String>),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("inconsistent fit request: {0}")]
    Inconsistent(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fit did not converge after {iterations} iterations (objective {objective:e})")]
    NonConvergence {
        iterations: usize,
        objective: f64,
        best: Vec<f64>,
    },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("no prunable weights left to remove")]
    NothingLeft,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Numeric,
    Infeasible,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::NonConvergence { .. } | Error::Diverged { .. } | Error::Domain(_) => {
                ErrorClass::Numeric
            }
            Error::Infeasible(_) | Error::OutOfRange { .. } => ErrorClass::Infeasible,
            _ => ErrorClass::Input,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
