//! Truncated bosonic Fock space over the circle Matsubara modes, the circle
//! Hamiltonian `H_C = dΓ(b) + V_C` with its ground state and gap, and the
//! spatial heat-equation propagator driven by time-slice field operators.

pub mod basis;
pub mod checks;
pub mod error;
pub mod ground;
pub mod heatprop;
pub mod krylov;
pub mod operators;
pub mod sparse;

pub use basis::{FockBasis, FockBasisSpec};
pub use error::{FockError, Result};
pub use ground::{ground_state, renormalized, GroundState};
pub use heatprop::{Drive, Kick, PropagatorProblem};
pub use operators::{build_free, build_vc, field_operator, hamiltonian, ComplexOperator, FockOperator, RealOperator};
pub use sparse::Csr;
