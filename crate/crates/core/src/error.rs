use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The request would exceed a fixed computational budget.
    #[error("resource limit: {0}")]
    Resource(String),

    /// A policy table has no parameters for a requested instance.
    #[error("no parameters for instance `{instance_id}`")]
    Lookup { instance_id: String },

    /// Structurally valid input that cannot be used (missing logits, tiny catalog, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A malformed record in a line-oriented file.
    #[error("parse error at line {line}: field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("metric error: {0}")]
    Metric(String),

    /// Training produced a NaN or infinite loss or gradient.
    #[error("non-finite loss or gradient at step {step}")]
    NonFinite { step: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Config(_) | Error::Io { .. } | Error::Data(_)
        )
    }
}
