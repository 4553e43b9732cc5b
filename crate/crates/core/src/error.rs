use thiserror::Error;

/// Errors raised by the estimators, generators and tests in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A numerical routine gave up. `partial` carries the best estimate
    /// reached before the routine stopped, when one exists.
    #[error("numerical failure: {message}")]
    NumericalFailure {
        message: String,
        partial: Option<f64>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure {
            message: msg.into(),
            partial: None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
