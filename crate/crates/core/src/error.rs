use thiserror::Error;

/// Unified error type for the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty set passed to {0}")]
    EmptySet(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("conditioning value {value} is outside the observed joint range")]
    UnknownConditioningValue { value: String },

    #[error("point {point} is not part of the metric carrier")]
    UnknownPoint { point: String },

    #[error("action {action} is not admissible at t={t}")]
    OutOfRangeAction { t: usize, action: String },

    #[error("observation {observation} is not admissible at t={t}")]
    OutOfRangeObservation { t: usize, observation: String },

    #[error("observation {observation} at t={t} is inconsistent with every disturbance history")]
    InfeasibleObservation { t: usize, observation: String },

    #[error("enumeration needs {nodes} nodes, exceeding the budget of {budget}")]
    ModelTooLarge { nodes: usize, budget: usize },

    #[error("generator incomplete: {0}")]
    GeneratorIncomplete(String),

    #[error("cells {a} and {b} are disconnected in the obstacle grid")]
    Disconnected { a: String, b: String },

    #[error("no learned range for key {key} at t={t}")]
    MissingKey { t: usize, key: String },

    #[error("dataset contains no trajectories")]
    EmptyDataset,

    #[error("negative input: {0}")]
    NegativeInput(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
