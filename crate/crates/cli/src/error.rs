use std::io;

use thiserror::Error;

/// Failure of a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration. Exit code 2.
    #[error("usage: {0}")]
    Usage(String),
    /// Missing, malformed or inconsistent input data. Exit code 3.
    #[error("data: {0}")]
    Data(String),
    /// Training or evaluation produced non-finite values. Exit code 4.
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>) -> impl FnOnce(io::Error) -> Self {
        let context = context.into();
        move |source| CliError::Io { context, source }
    }
}

impl From<pcc_core::Error> for CliError {
    fn from(err: pcc_core::Error) -> Self {
        match err {
            pcc_core::Error::Config(m) => CliError::Usage(m),
            pcc_core::Error::Domain(m) => CliError::Data(m),
            pcc_core::Error::Numerical(m) => CliError::Numerical(m),
            pcc_core::Error::Io(e) => CliError::Io {
                context: "i/o".into(),
                source: e,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
