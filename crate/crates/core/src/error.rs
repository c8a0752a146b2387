use thiserror::Error;

/// Errors produced by training, interval construction, data loading and the
/// simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition (counts, levels, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A file could not be turned into a usable `Dataset`.
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    /// A dataset does not match the schema a forest was trained on.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// A forest prediction was requested over an empty tree subset.
    #[error("empty tree subset for forest prediction")]
    EmptySubforest,

    /// Every observation was in-bag for every tree; no out-of-bag errors exist.
    #[error("no observation has out-of-bag information")]
    NoOobInformation,

    /// A saved model file is corrupt or has an unsupported version.
    #[error("model format: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn invalid_dataset(msg: impl Into<String>) -> Self {
        Error::InvalidDataset(msg.into())
    }

    pub(crate) fn schema_mismatch(msg: impl Into<String>) -> Self {
        Error::SchemaMismatch(msg.into())
    }
}
