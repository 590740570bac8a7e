//! Lattice path-space side of a thermal P(φ)₂ laboratory.
//!
//! The Euclidean cylinder `S_β × [-L, L]` is discretized with `n_t × n_x`
//! sites. [`covariance`] holds the free covariance as a Fourier multiplier,
//! [`gaussian`] samples `dφ_C`, [`wick`] does exact Wick algebra and
//! [`interaction`] builds the spatially cut off interacting measure `μ_l`.

pub mod covariance;
pub mod dump;
pub mod error;
pub mod gaussian;
pub mod interaction;
pub mod lattice;
pub mod stats;
pub mod wick;

pub use covariance::{CovKernel, SpatialSymbol, ThermalKernel};
pub use error::{Error, Result};
pub use gaussian::SampleStream;
pub use interaction::{Ensemble, InteractionSpec, Method, MetropolisConfig};
pub use lattice::{Field, FourierPlan, LatticeData, LatticeSpec, TestFunction};
pub use stats::Estimate;
pub use wick::WickPolynomial;
