//! Crate-wide error type.

use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates a precondition.
    #[error("{0}")]
    InvalidArgument(String),

    /// A configuration document failed validation. The message lists every
    /// violation found, separated by "; ".
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{context}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    /// The file is not a latent file at all.
    #[error("not a latent file: bad magic {found:?}, expected \"LTG1\"")]
    BadMagic { found: [u8; 4] },

    /// The file claims to be a latent file but its payload is inconsistent.
    #[error("truncated or corrupt latent file: {0}")]
    Corrupt(String),

    /// Stored values violate a data invariant (NaN or infinite samples).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// A pluggable component broke its behavioural contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced non-finite values.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An error raised while executing a pipeline stage.
    #[error("stage {index} ({kind})")]
    Stage {
        index: usize,
        kind: String,
        #[source]
        source: Box<Error>,
    },
}

/// Coarse error classes, used by binaries to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid arguments or configuration.
    InvalidInput,
    /// I/O failures, including unreadable or corrupt files.
    Io,
    /// Numeric failures and broken component contracts.
    Numeric,
}

impl Error {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn in_stage(index: usize, kind: &str, source: Error) -> Self {
        Error::Stage {
            index,
            kind: kind.to_string(),
            source: Box::new(source),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::Config(_) => ErrorKind::InvalidInput,
            Error::Io { .. }
            | Error::BadMagic { .. }
            | Error::Corrupt(_)
            | Error::InvalidData(_) => ErrorKind::Io,
            Error::Contract(_) | Error::Numeric(_) => ErrorKind::Numeric,
            Error::Stage { source, .. } => source.kind(),
        }
    }
}
