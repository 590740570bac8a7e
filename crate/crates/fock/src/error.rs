use thiserror::Error;

/// Errors raised by the Fock-space and propagator machinery.
#[derive(Debug, Error)]
pub enum FockError {
    #[error("Fock dimension {dim} exceeds the cap {cap}")]
    DimensionOverflow { dim: u128, cap: usize },

    #[error("invalid Fock basis spec: {0}")]
    InvalidSpec(String),

    #[error("test function has weight {amplitude:.3e} on mode {mode} beyond the cutoff; pass project=true to drop it")]
    ModeBeyondCutoff { mode: i64, amplitude: f64 },

    #[error("operator {label} is not Hermitian (defect {defect:.3e})")]
    NotHermitian { label: String, defect: f64 },

    #[error("eigensolver did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("step size underflow at x = {x} (h = {h:.3e}); the problem is stiff, use the splitting method")]
    StepUnderflow { x: f64, h: f64 },

    #[error("invalid interval [{s}, {t}]")]
    InvalidInterval { s: f64, t: f64 },

    #[error("operator dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("[H, P] has norm {0:.3e}; the quadrature grid breaks translation symmetry")]
    CommutatorTooLarge(f64),

    #[error("spectral gap {0} is not positive")]
    NoGap(f64),

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Core(#[from] pphi2_core::Error),
}

pub type Result<T> = std::result::Result<T, FockError>;
