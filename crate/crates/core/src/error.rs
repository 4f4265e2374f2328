use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("empty sample")]
    EmptySample,
    #[error("delta out of admissible range: delta={delta}, n={n} (need e^(1-n/2) <= delta < 1, n >= 4)")]
    DeltaOutOfRange { delta: f64, n: usize },
    #[error("invalid block count {b} for n={n} (need 1 <= b <= n/2)")]
    InvalidBlockCount { n: usize, b: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cover construction failed; increase pool (d={d}, gamma={gamma}, pool={pool})")]
    CoverConstruction { d: usize, gamma: f64, pool: usize },
    #[error("sample too small for d at this delta (n={n}, d={d}, delta={delta})")]
    SampleTooSmall { n: usize, d: usize, delta: f64 },
    #[error("insufficient pairs: {m} samples (need at least 8)")]
    InsufficientPairs { m: usize },
    #[error("cover does not identify the quadratic form ({directions} directions, need {needed})")]
    CoverNotIdentifying { directions: usize, needed: usize },
    #[error("fourth moment does not exist: {0}")]
    NoFourthMoment(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = EstimateError> = std::result::Result<T, E>;
