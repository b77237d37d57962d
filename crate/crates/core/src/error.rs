use thiserror::Error;

/// Errors raised by the optimization engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(
        "covariance is numerically degenerate even with jitter {jitter:e}; \
         points {first} and {second} are near-duplicates under the sampled length-scales"
    )]
    Degenerate {
        jitter: f64,
        first: usize,
        second: usize,
    },

    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid outcome {0}; expected -1, 0 or 1")]
    InvalidOutcome(i64),

    #[error("point {0:?} lies outside the bounding box")]
    OutOfBox(Vec<f64>),

    #[error("the two compared points coincide")]
    IdenticalPoints,

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("no incumbent best point yet; record a comparison first")]
    NoIncumbent,

    #[error(
        "variational fit diverged: non-finite objective for {consecutive} consecutive steps \
         (at step {step}); try a smaller step size"
    )]
    Divergence { step: usize, consecutive: usize },

    #[error("invalid experiment state: {0}")]
    InvalidState(String),

    #[error("unknown test function `{0}`")]
    UnknownFunction(String),

    #[error("summary group {0} is inconsistent")]
    MixedGroup(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
