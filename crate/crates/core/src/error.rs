use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid mesh, model or run configuration.
    #[error("configuration error: {0}")]
    Config(String),
    /// Input outside the domain of an operation (bad index, empty input, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Non-finite values during training or differentiation.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
