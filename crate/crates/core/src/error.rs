use std::path::PathBuf;

use thiserror::Error;

use crate::particle::RescaledPath;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition (dimension mismatch, empty input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// A generator or remainder was evaluated outside the domain of `h_n`.
    #[error("domain error: {0}")]
    Domain(String),

    /// A replica produced a non-finite coordinate. `prefix` holds the path
    /// recorded up to the last finite record point, when one exists.
    #[error("blow-up in replica {replica} at step {step}")]
    BlowUp {
        replica: u64,
        step: u64,
        prefix: Option<Box<RescaledPath>>,
    },

    #[error("acceptance rate {acceptance:.4} below 0.05 after tuning; retune the step size (currently {step_size:.3e})")]
    StepSize { acceptance: f64, step_size: f64 },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for bad input or I/O, 1 for numerical or statistical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Io { .. } | Error::Json(_) | Error::Contract(_) | Error::InvalidModel(_) => 2,
            Error::BlowUp { .. } | Error::StepSize { .. } | Error::Domain(_) => 1,
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
