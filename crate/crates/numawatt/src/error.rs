use std::io;

use thiserror::Error;

/// Errors produced by the attribution library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported platform: {0}")]
    UnsupportedPlatform(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("trace frame {frame}: {message}")]
    TraceFormat { frame: usize, message: String },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("target process exited: pid {0}")]
    TargetExited(i32),

    #[error("database error: {0}")]
    Database(String),

    #[error("validation mismatch: {0}")]
    Mismatch(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
