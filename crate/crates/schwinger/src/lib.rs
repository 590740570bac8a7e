//! Cross-validation of the lattice path integral against the Fock-space
//! heat-equation picture: generating functionals and moments at finite and
//! infinite spatial cutoff, sharp-time Schwinger functions, Euclidean Green's
//! functions, reflection positivity and clustering.

pub mod battery;
pub mod correlations;
pub mod crosscheck;
pub mod error;
pub mod report;
pub mod setup;

pub use error::{Result, SchwingerError};
pub use report::{Check, Criterion};
pub use setup::{CrossConfig, FockSide, Generator};
