use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the kinematics/learning/IK pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Actuation outside the robot's declared ranges.
    #[error("actuation {index} = {value} outside range [{min}, {max}]")]
    Domain {
        index: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

pub(crate) fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation(format!("{what} contains non-finite value {v}")));
    }
    Ok(())
}
