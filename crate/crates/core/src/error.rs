use std::path::PathBuf;

/// Errors raised across the crate.
///
/// The variants are grouped by the kind of failure so callers (the CLI in
/// particular) can map them onto exit codes without string matching.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A function was evaluated outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration, specification or argument is invalid.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A data file or in-memory dataset violates its schema or invariants.
    #[error("data error: {0}")]
    Data(String),

    /// A data file row failed validation.
    #[error("{path}: row {row}: {message}")]
    Row { path: PathBuf, row: usize, message: String },

    /// The sampler could not produce draws.
    #[error("sampler failure: {0}")]
    Sampler(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn data(msg: impl Into<String>) -> Error {
    Error::Data(msg.into())
}
