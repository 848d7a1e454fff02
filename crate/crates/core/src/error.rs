use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by model construction, estimation, inference and I/O.
#[derive(Debug, Error)]
pub enum NntsError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or file violates one of the type invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The sample does not carry enough information for the statistic.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// The symmetric fit beat the general fit by more than optimizer noise.
    #[error("optimizer inconsistency: symmetric log-likelihood exceeds general by {excess:.3e}")]
    OptimizerInconsistency { excess: f64 },

    /// Too many datasets failed inside a simulation experiment.
    #[error("experiment aborted: {failed} of {total} datasets failed")]
    ExperimentAborted { failed: usize, total: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("schema error at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl NntsError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        NntsError::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        NntsError::InvalidModel(msg.into())
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        NntsError::DegenerateSample(msg.into())
    }

    pub(crate) fn schema(field: impl Into<String>, msg: impl Into<String>) -> Self {
        NntsError::Schema {
            field: field.into(),
            message: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, NntsError>;
