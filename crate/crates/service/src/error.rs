use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("session {0} not found")]
    NotFound(String),
    #[error("session {0} already exists")]
    AlreadyExists(String),
    #[error("session is {0} and accepts no further changes")]
    SessionClosed(&'static str),
    #[error("every unit has been drawn")]
    Exhausted,
    #[error("sequence {got} was already recorded (next expected {expected})")]
    StaleSequence { expected: u64, got: u64 },
    #[error("no draw is pending for sequence {got} (next pending {expected:?})")]
    OutOfOrder { expected: Option<u64>, got: u64 },
    #[error("value {value} for assertion {assertion} is outside [0, {high}]")]
    OutOfRange { assertion: String, value: f64, high: f64 },
    #[error("session file is inconsistent: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Engine(#[from] rla_core::Error),
    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl ServiceError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidConfig(_) => "invalid_config",
            Self::InvalidRequest(_) => "invalid_request",
            Self::NotFound(_) => "not_found",
            Self::AlreadyExists(_) => "already_exists",
            Self::SessionClosed(_) => "session_closed",
            Self::Exhausted => "exhausted",
            Self::StaleSequence { .. } => "stale_sequence",
            Self::OutOfOrder { .. } => "out_of_order",
            Self::OutOfRange { .. } => "out_of_range",
            Self::Corrupt(_) => "corrupt_session",
            Self::Engine(rla_core::Error::InvalidConfig(_)) => "invalid_config",
            Self::Engine(rla_core::Error::OutOfRange { .. }) => "out_of_range",
            Self::Engine(_) => "engine_error",
            Self::Io(_) => "storage_error",
            Self::Json(_) => "serialization_error",
        }
    }
}
