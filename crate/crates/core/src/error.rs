use std::io;

use thiserror::Error;

/// Errors produced by the estimation and scoring pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller violated a precondition (bad dimensions, bad flag values).
    #[error("usage error: {0}")]
    Usage(String),
    /// Input data is unusable (non-finite values, empty input).
    #[error("data error: {0}")]
    Data(String),
    /// A file could not be parsed or failed validation on load.
    #[error("format error: {0}")]
    Format(String),
    /// A numerical routine failed (non-SPD matrix, degenerate posterior).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Estimator initialization failed.
    #[error("init error: {0}")]
    Init(String),
    /// A mixture component received no responsibility mass.
    #[error("component {component} starved (mass {mass:e})")]
    Starved { component: usize, mass: f64 },
    /// Online estimation gave up after too many consecutive failed M-steps.
    #[error("estimation aborted: {0}")]
    Aborted(String),
    #[error("calibration error: {0}")]
    Calibration(String),
    #[error("selection error: {0}")]
    Selection(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for this error: 2 for usage and format problems,
    /// 3 for numeric failures and aborted estimation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_)
            | Error::Data(_)
            | Error::Format(_)
            | Error::Calibration(_)
            | Error::Selection(_)
            | Error::UndefinedMetric(_)
            | Error::Io(_) => 2,
            Error::Numeric(_) | Error::Init(_) | Error::Starved { .. } | Error::Aborted(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
