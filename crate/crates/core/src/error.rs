use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("no points")]
    NoPoints,
    #[error("crop exceeds frame")]
    CropExceedsFrame,
    #[error("block not searchable")]
    BlockNotSearchable,
    #[error("no usable blocks (frame {frame})")]
    NoUsableBlocks { frame: usize },
    #[error("camera motion exceeds frame (frame {frame})")]
    CameraMotionExceedsFrame { frame: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("dimension mismatch at frame {frame}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        frame: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("decode error in {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("unreadable frames: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    UnreadableFrames(Vec<PathBuf>),
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),
    #[error("config error: {0}")]
    Config(String),
    #[error("encoder command failed: {0}")]
    Encoder(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io { .. }
            | Error::Decode { .. }
            | Error::UnreadableFrames(_)
            | Error::NoFrames(_) => 2,
            Error::Stage { source, .. } => match source.as_ref() {
                e @ (Error::Io { .. } | Error::Decode { .. } | Error::UnreadableFrames(_)) => {
                    e.exit_code()
                }
                _ => 3,
            },
            _ => 3,
        }
    }
}
