use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("requested {requested} keypoints but the model only supports {available}")]
    KeypointCountExceedsModel { requested: usize, available: usize },

    #[error("need at least 3 correspondences, got {0}")]
    InsufficientCorrespondences(usize),

    #[error("degenerate keypoint configuration (collinear or coincident object keypoints)")]
    DegenerateConfiguration,

    #[error("unknown model class id {0}")]
    UnknownModel(u32),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("model has no vertices")]
    EmptyModel,

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
