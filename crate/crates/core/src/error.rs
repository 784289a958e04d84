use thiserror::Error;

/// Errors raised by estimators, inference routines and experiment drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value failed validation. `field` names the offending field.
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },

    /// A data item (observation, sample, matrix) is malformed.
    #[error("invalid input{}: {message}", index.map(|i| format!(" at index {i}")).unwrap_or_default())]
    Input { index: Option<usize>, message: String },

    /// A numerical routine failed (factorization, quadrature, degenerate density).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn input(message: impl Into<String>) -> Self {
        Error::Input {
            index: None,
            message: message.into(),
        }
    }

    /// Attaches a position (observation or replication index) to an input error.
    pub fn at_index(self, idx: usize) -> Self {
        match self {
            Error::Input { message, .. } => Error::Input {
                index: Some(idx),
                message,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
