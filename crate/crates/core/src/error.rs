use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("value {value} outside [{low}, {high}]")]
    OutOfRange { value: f64, low: f64, high: f64 },

    #[error("test already finished ({0:?})")]
    StepAfterFinish(crate::Status),

    #[error("no admissible alternative: null mean {null_mean} is at or above {ceiling}")]
    DegenerateNull { null_mean: f64, ceiling: f64 },

    #[error("contest has no ballot cards")]
    EmptyContest,

    #[error("no units remain to be drawn")]
    Exhausted,

    #[error("a draw is already pending")]
    PendingDraw,

    #[error("point masses need {needed} of {available} units")]
    InfeasibleCounts { needed: u64, available: u64 },

    #[error("method {method} has no result for condition {condition}")]
    MissingCell { method: String, condition: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("unknown table {0}")]
    UnknownTable(String),
}
