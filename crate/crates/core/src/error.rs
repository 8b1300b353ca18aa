use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while loading or validating a fab model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },
    #[error("dangling reference at `{field}`: `{reference}` does not exist")]
    Dangling { field: String, reference: String },
}

impl ModelError {
    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        ModelError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn dangling(field: impl Into<String>, reference: impl Into<String>) -> Self {
        ModelError::Dangling {
            field: field.into(),
            reference: reference.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("dispatcher contract violation at t={time:.4}h on tool `{tool}`: {message}")]
    Contract {
        time: f64,
        tool: String,
        message: String,
    },

    #[error("simulation invariant violated: {0}")]
    Invariant(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("zero reference denominator for `{0}`; add a floor to the reference KPI")]
    ZeroReference(&'static str),

    #[error("parameter vector length mismatch: expected {expected}, got {actual}")]
    ParamLength { expected: usize, actual: usize },

    #[error("architecture mismatch: checkpoint has {found}, expected {expected}")]
    Descriptor { expected: String, found: String },

    #[error("policy has no critic head")]
    MissingCritic,

    #[error("fitness count mismatch: asked {expected} candidates, told {actual}")]
    FitnessCount { expected: usize, actual: usize },

    #[error("non-finite PPO loss in minibatch of {0} samples")]
    NonFiniteLoss(usize),

    #[error("sample buffer capacity exceeded: {needed} floats needed, budget is {budget}")]
    Capacity { needed: usize, budget: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
