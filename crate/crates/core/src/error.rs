use thiserror::Error;

/// Errors raised by the lattice-side machinery.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice spec: {0}")]
    InvalidSpec(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("lattice specs of the two operands differ")]
    SpecMismatch,

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("{what} out of range: {detail}")]
    OutOfRange { what: &'static str, detail: String },

    #[error("unsupported Sobolev order {0} (expected -1, -1/2 or +1/2)")]
    UnsupportedOrder(f64),

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("polynomial parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    #[error("interaction polynomial is not bounded below (degree {degree}, leading {leading})")]
    NotBoundedBelow { degree: usize, leading: f64 },

    #[error("effective sample size {ess:.1} below threshold {threshold:.1}; use the Metropolis sampler")]
    LowEffectiveSampleSize { ess: f64, threshold: f64 },

    #[error("invalid window [{lo}, {hi}]")]
    InvalidWindow { lo: f64, hi: f64 },

    #[error("{0}")]
    Sampler(String),

    #[error("not enough samples: {samples} for {needed} functionals")]
    TooFewSamples { samples: usize, needed: usize },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("field dump: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
