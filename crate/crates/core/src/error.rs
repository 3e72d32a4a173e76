use std::path::PathBuf;

use crate::kinematics::ParamVector;

/// Errors produced by the hand model library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("model generation error: {0}")]
    Generation(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("hand state was not produced from these parameters")]
    StateMismatch,

    #[error("fit diverged at iteration {iteration}: non-finite loss")]
    Diverged {
        iteration: usize,
        last_good: Box<ParamVector>,
    },

    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("no hand pixels in depth frame")]
    NoHand,

    #[error("sample index {index} out of range (count {count})")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sample {index} failed")]
    Sample {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
