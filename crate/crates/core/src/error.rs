use std::path::PathBuf;

use crate::ingest::Channel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{what} parse error at line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error("channel {0} dimension mismatch")]
    ChannelDimension(Channel),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate channel {0}: all pairwise distances are zero")]
    DegenerateChannel(Channel),

    #[error("single-class training set")]
    SingleClass,

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("unknown atom id {0}")]
    UnknownAtom(usize),

    #[error("unknown class {0:?}")]
    UnknownClass(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Process exit code: 2 for usage errors, 3 for data errors, 4 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Usage(_) => 2,
            Error::DegenerateChannel(_) | Error::NonFinite(_) => 4,
            _ => 3,
        }
    }
}
