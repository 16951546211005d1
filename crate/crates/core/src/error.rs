use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("graph contains a cycle through node {0}")]
    CycleDetected(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("mechanism expects {expected} inputs, got {got}")]
    ArityMismatch { expected: usize, got: usize },

    #[error("linear system is not positive definite (pivot {pivot})")]
    SingularSystem { pivot: usize },

    #[error("dependence coefficient has a zero denominator")]
    DegenerateDenominator,

    #[error("rank-deficient design for node {node} in environment {env}")]
    RankDeficient { node: usize, env: usize },

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag used in result tables.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::CycleDetected(_) => "cycle_detected",
            Error::NonFinite(_) => "non_finite",
            Error::ArityMismatch { .. } => "arity_mismatch",
            Error::SingularSystem { .. } => "singular_system",
            Error::DegenerateDenominator => "degenerate_denominator",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::InsufficientSamples(_) => "insufficient_samples",
            Error::Input(_) => "input",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
