use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the fusion stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("score range is zero (max = min = {0}); the scorer is constant")]
    DegenerateRange(f64),

    #[error("window has {len} slots but patch size is {patch_size}")]
    WindowTooShort { len: usize, patch_size: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("training diverged at step {step}: {detail}")]
    NonConvergence { step: usize, detail: String },

    #[error("all scores are zero; half-Gaussian scale would be zero")]
    DegenerateScores,

    #[error("density is non-positive at mapped score {0}")]
    NonFiniteDensity(f64),

    #[error("malformed LLM response after {attempts} attempt(s): {log}")]
    MalformedResponse { attempts: usize, log: String },

    #[error("LLM score {value} at slot {slot} is outside [0, 1]")]
    ScoreOutOfRange { slot: usize, value: f64 },

    #[error("no mock fixture for window `{0}`")]
    MissingFixture(String),

    #[error("missing LLM scores for window `{0}`")]
    MissingLlmScores(String),

    #[error("environment variable `{0}` is not set")]
    MissingApiKey(String),

    #[error("not enough room to place {requested} anomalies (placed {placed})")]
    InsufficientRoom { requested: usize, placed: usize },

    #[error("series of length {len} is too short (minimum {min})")]
    TooShort { len: usize, min: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("labels contain no positive slot")]
    NoPositives,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
