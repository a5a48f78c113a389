use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space limits: {0}")]
    InvalidLimits(String),

    #[error("malformed architecture: {0}")]
    MalformedArchitecture(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),

    #[error("sampling exhausted: no valid edge set with v={vertices}, e={edges}")]
    SamplingExhausted { vertices: usize, edges: usize },

    #[error("enumeration budget exceeded: v_max={0} (at most 5 supported)")]
    BudgetExceeded(usize),

    #[error("shape mismatch at vertex {vertex}: expected width {expected}, got {got}")]
    ShapeMismatch {
        vertex: usize,
        expected: usize,
        got: usize,
    },

    #[error("too few records: got {got}, need at least {need}")]
    TooFewRecords { got: usize, need: usize },

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("{0} is undefined for zero-variance input")]
    ZeroVariance(&'static str),

    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("query budget exhausted ({0} queries)")]
    BudgetExhausted(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
