//! Error type shared across the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input value or shape violates an operation's precondition.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// A scalar parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The experiment configuration is inconsistent or infeasible.
    #[error("configuration error: {0}")]
    Config(String),

    /// A data file could not be ingested; names the offending file and line.
    #[error("ingestion error in {file}:{line}: {message}")]
    Ingestion {
        file: String,
        line: usize,
        message: String,
    },

    /// A metric is undefined for the given inputs (e.g. empty class subset).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
