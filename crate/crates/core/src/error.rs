use std::io;

use thiserror::Error;

/// Failures of the external (child-process) predictor protocol.
#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("failed to spawn predictor process `{command}`: {source}")]
    Spawn { command: String, source: io::Error },
    #[error("predictor process exited ({status})")]
    Exited { status: String },
    #[error("predictor did not answer request {id} within {timeout_secs} s")]
    Timeout { id: u64, timeout_secs: f64 },
    #[error("malformed predictor response: {0}")]
    Malformed(String),
    #[error("predictor output {value} at row {row} is outside [0, 1]")]
    OutOfRange { row: usize, value: f64 },
    #[error("predictor I/O error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("{players} players exceed the exact-enumeration budget of {limit}; {hint}")]
    Capacity {
        players: usize,
        limit: usize,
        hint: &'static str,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("training diverged at step {step}: {message}")]
    Training { step: usize, message: String },
    #[error("generation failed: {0}")]
    Generation(String),
    #[error("recall undefined: no ground-truth positive regions")]
    UndefinedRecall,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
