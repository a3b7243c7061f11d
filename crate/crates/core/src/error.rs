use std::path::PathBuf;

/// Errors raised anywhere in the channel / simulation / calibration pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric input is outside the domain of the model.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration object violates one of its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A CSV or key-value document could not be parsed as a whole.
    #[error("{context}: {message}")]
    Document { context: String, message: String },

    /// A single row of a CSV document is malformed.
    #[error("row {row}: column `{column}`: {message}")]
    Row {
        row: usize,
        column: String,
        message: String,
    },

    /// Two PDR curves cannot be compared.
    #[error("incompatible curves: {0}")]
    Incompatible(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn document(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Document {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn row(row: usize, column: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Row {
            row,
            column: column.into(),
            message: message.into(),
        }
    }
}
