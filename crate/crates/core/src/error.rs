use thiserror::Error;

/// Errors produced by backends, scorers, decoders and metrics.
#[derive(Debug, Error)]
pub enum Error {
    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),

    #[error("backend protocol error: {0}")]
    Protocol(String),

    #[error("context of {len} tokens exceeds the model limit of {limit}")]
    ContextTooLong { len: usize, limit: usize },

    #[error("invalid context: {0}")]
    InvalidContext(String),

    #[error("empty corpus and empty vocabulary")]
    EmptyVocabulary,

    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),

    #[error("constraint payload is empty")]
    EmptyPayload,

    #[error("payload does not match constraint kind {0}")]
    PayloadMismatch(&'static str),

    #[error("constraint has zero tokens")]
    ZeroTokenConstraint,

    #[error("both Yes and No answers have zero probability")]
    DegenerateProbe,

    #[error("every candidate has zero probability")]
    DegenerateDistribution,

    #[error("invalid decoder config: {0}")]
    InvalidConfig(String),

    #[error("sequence of {len} tokens is shorter than n = {n}")]
    TooShort { len: usize, n: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("split point {split} out of range for pair {id}")]
    SplitOutOfRange { id: String, split: usize },

    #[error("cannot build a distinct negative for pair {0}")]
    DegeneratePair(String),

    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("decode step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
