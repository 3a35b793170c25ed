use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A scenario or run configuration violates an invariant. The first
    /// field names the offending key.
    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// A numerical routine could not produce a trustworthy result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Inputs with inconsistent dimensions were combined.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An iterative solver stopped before reaching its tolerance.
    #[error("{solver} did not converge after {iterations} iterations (last residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("I/O failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV failure: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON failure: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code: 1 configuration, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 1,
            Error::Numerical(_) | Error::Dimension(_) | Error::NotConverged { .. } => 2,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 3,
        }
    }

    /// Adds an experiment context prefix to numerical and dimension errors.
    pub fn with_context(self, context: &str) -> Self {
        match self {
            Error::Numerical(msg) => Error::Numerical(format!("{context}: {msg}")),
            Error::Dimension(msg) => Error::Dimension(format!("{context}: {msg}")),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
