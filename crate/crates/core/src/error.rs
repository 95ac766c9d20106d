use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measurement model: {0}")]
    InvalidModel(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("stage {stage} out of range for a schedule with K = {max_stage}")]
    StageOutOfRange { stage: u32, max_stage: u32 },

    #[error("interaction time 2^{stage} exceeds the posterior's maximum index {max_index}")]
    PosteriorTooSmall { stage: u32, max_index: usize },

    #[error("policy parameter vector has length {actual}, schedule requires {expected}")]
    ParameterLength { expected: usize, actual: usize },

    #[error("policy parameter {index} is not finite ({value})")]
    NonFiniteParameter { index: usize, value: f64 },

    #[error("policy variant `{0}` requires a parameter vector")]
    MissingParameters(&'static str),

    #[error("policy variant `{0}` carries no parameters")]
    NotParameterized(&'static str),

    #[error("exact enumeration over {detections} detections exceeds the cap of {cap}")]
    EnumerationCap { detections: usize, cap: usize },

    #[error("Monte Carlo evaluation needs at least 2 trials, got {0}")]
    TooFewTrials(u64),

    #[error("objective returned non-finite value {value} at position {position:?}")]
    NonFiniteObjective { value: f64, position: Vec<f64> },

    #[error("invalid swarm configuration: {0}")]
    InvalidSwarm(String),
}
