use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UtilityError {
    #[error("quantity {0} is outside the domain [0, inf)")]
    NegativeQuantity(f64),
    #[error("derivative is unbounded at zero")]
    UnboundedDerivative,
    #[error("invalid utility parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
}

#[derive(Debug, Error)]
pub enum MarketError {
    #[error(transparent)]
    Utility(#[from] UtilityError),

    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("need at least {needed} replicates, got {got}")]
    TooFewReplicates { needed: usize, got: usize },

    #[error("replicate {index} has length {len}, expected {expected}")]
    RaggedReplicates {
        index: usize,
        len: usize,
        expected: usize,
    },

    #[error("nothing to summarize: the run has no rounds")]
    EmptyRun,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl MarketError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MarketError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        MarketError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = MarketError> = std::result::Result<T, E>;
