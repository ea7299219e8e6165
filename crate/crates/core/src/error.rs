use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("request has no request line")]
    EmptyRequest,
    #[error("cannot read {path}: {source}")]
    UnreadablePath {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown corpus format `{0}`")]
    UnknownFormat(String),
    #[error("corpus contains no records")]
    EmptyCorpus,
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error("value {value} outside {expected}")]
    OutOfRange { value: f64, expected: &'static str },

    #[error("vocabulary size {requested} is below the minimum of {minimum}")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("token id {0} is not in the vocabulary")]
    UnknownId(u32),
    #[error("encoded sequence has {len} positions, limit is {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("non-finite loss at epoch {epoch}, step {step} (loss = {loss})")]
    NonFiniteLoss { epoch: usize, step: usize, loss: f64 },
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    #[error("masked request has no <MASK> token")]
    NoMaskToken,
    #[error("masked request has {0} <MASK> tokens, expected one")]
    MultipleMaskTokens(usize),
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("every entity token of the request is reserved")]
    NoMaskableToken,
    #[error("position {0} holds a reserved token")]
    ReservedPosition(usize),
    #[error("index {index} out of range for {len} tokens")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no permitted fill differs from the original token")]
    NoViableCandidate,
    #[error("not a probability distribution: {0}")]
    NotADistribution(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("training data contains a single class")]
    SingleClassInput,
    #[error("calibration set is empty")]
    EmptyCalibrationSet,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("candidate is empty")]
    EmptyCandidate,
    #[error("transport weights are invalid: {0}")]
    WeightMismatch(String),
    #[error("cost matrix has a negative entry")]
    NegativeCost,

    #[error("malformed artifact {path}: {reason}")]
    MalformedArtifact { path: PathBuf, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            NonFiniteLoss { .. } | ZeroVector | NotADistribution(_) => ErrorCategory::Numerical,
            InvalidConfig(_) | Config(_) | UnknownFormat(_) | VocabTooSmall { .. } | OutOfRange { .. } => {
                ErrorCategory::Config
            }
            _ => ErrorCategory::Data,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::MalformedArtifact { path: path.into(), reason: reason.into() }
    }

    pub(crate) fn unreadable(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::UnreadablePath { path: path.into(), source }
    }
}
