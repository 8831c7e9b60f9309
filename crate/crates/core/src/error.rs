use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("time {t} is outside the trajectory span [{start}, {end}] (margin {margin} s)")]
    OutOfRange {
        t: f64,
        start: f64,
        end: f64,
        margin: f64,
    },

    #[error("crop box does not intersect the mesh")]
    EmptyIntersection,

    #[error("sampling failed: {0}")]
    SamplingFailed(String),

    #[error("non-finite loss at step {step} (scene {scene})")]
    NonFiniteLoss { step: usize, scene: usize },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("bad format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}
