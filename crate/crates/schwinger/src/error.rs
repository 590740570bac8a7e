use thiserror::Error;

#[derive(Debug, Error)]
pub enum SchwingerError {
    #[error(transparent)]
    Core(#[from] pphi2_core::Error),

    #[error(transparent)]
    Fock(#[from] pphi2_fock::FockError),

    #[error("truncation mismatch: {0}")]
    TruncationMismatch(String),

    #[error("insertion times must be nondecreasing within one period, got {0:?}")]
    UnorderedTimes(Vec<f64>),

    #[error("shift {shift} exceeds half the box {half_box}; periodic images would contaminate the correlator")]
    ShiftTooLarge { shift: f64, half_box: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, SchwingerError>;
