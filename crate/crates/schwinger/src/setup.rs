//! Matched lattice and Fock truncations.
//!
//! The lattice keeps the Matsubara modes `|n| ≤ K` of an `n_t = 2K + 2`
//! time grid (the Nyquist mode is masked) and uses the transfer spatial
//! symbol, so its site fields are exactly the sharp-space fields of the Fock
//! picture and both sides Wick-order against the same constant. The Fock
//! interaction is integrated over the same `n_t` time nodes.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use pphi2_core::{CovKernel, LatticeSpec, SpatialSymbol, TestFunction, WickPolynomial};
use pphi2_fock::heatprop::{Drive, Kick, PropagatorProblem, Spectral};
use pphi2_fock::operators::mode_coefficients;
use pphi2_fock::{build_free, build_vc, field_operator, ground_state, hamiltonian, renormalized, Csr, FockBasis, FockBasisSpec, RealOperator};

use crate::error::{Result, SchwingerError};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrossConfig {
    pub beta: f64,
    pub mass: f64,
    /// Half-length `L` of the periodic spatial box.
    pub length: f64,
    pub nx: usize,
    /// Circle cutoff `K`; the lattice has `n_t = 2K + 2` time sites.
    pub modes: usize,
    pub n_max: usize,
    /// Coupling of `λ :φ⁴:`.
    pub lambda: f64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for CrossConfig {
    fn default() -> Self {
        CrossConfig {
            beta: 1.0,
            mass: 1.0,
            length: 8.0,
            nx: 640,
            modes: 2,
            n_max: 8,
            lambda: 0.1,
            samples: 100_000,
            seed: 20_241_018,
        }
    }
}

impl CrossConfig {
    pub fn nt(&self) -> usize {
        2 * self.modes + 2
    }

    pub fn lattice(&self) -> Result<LatticeSpec> {
        Ok(LatticeSpec::new(self.beta, self.length, self.nt(), self.nx, self.mass)?)
    }

    pub fn kernel(&self) -> Result<CovKernel> {
        Ok(CovKernel::with_options(self.lattice()?, SpatialSymbol::Transfer, Some(self.modes))?)
    }

    pub fn basis_spec(&self) -> Result<FockBasisSpec> {
        Ok(FockBasisSpec::new(self.beta, self.mass, self.modes, self.n_max)?.with_cap(200_000))
    }

    pub fn coeffs(&self) -> Vec<f64> {
        vec![0.0, 0.0, 0.0, 0.0, self.lambda]
    }

    pub fn with_n_max(&self, n_max: usize) -> Self {
        CrossConfig { n_max, ..*self }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        CrossConfig { lambda, ..*self }
    }

    /// `l` and `a` must sit on cell boundaries so the window `[-l, l]` and
    /// the support `[-a, a]` contain whole cells.
    pub fn check_cutoffs(&self, a: f64, l: f64) -> Result<()> {
        let ax = 2.0 * self.length / self.nx as f64;
        let on_grid = |v: f64| ((v / ax) - (v / ax).round()).abs() < 1e-9;
        if !(0.0 <= a && a <= l && l <= self.length) {
            return Err(SchwingerError::Config(format!("need 0 <= a <= l <= L, got a = {a}, l = {l}, L = {}", self.length)));
        }
        if !on_grid(a) || !on_grid(l) {
            return Err(SchwingerError::Config(format!("a = {a} and l = {l} must be multiples of a_x = {ax}")));
        }
        Ok(())
    }
}

/// Confirms that a lattice kernel and a Fock basis carry the same modes.
pub fn check_matched(kernel: &CovKernel, basis: &FockBasisSpec) -> Result<()> {
    let s = kernel.spec();
    if kernel.time_cutoff() != Some(basis.modes) || s.nt != 2 * basis.modes + 2 {
        return Err(SchwingerError::TruncationMismatch(format!(
            "lattice n_t = {} with cutoff {:?} against Fock K = {}",
            s.nt,
            kernel.time_cutoff(),
            basis.modes
        )));
    }
    if kernel.symbol() != SpatialSymbol::Transfer {
        return Err(SchwingerError::TruncationMismatch("cross-checks need the transfer spatial symbol".into()));
    }
    if ((s.beta - basis.beta).abs() > 1e-12) || ((s.mass - basis.mass).abs() > 1e-12) {
        return Err(SchwingerError::TruncationMismatch("beta or mass differ".into()));
    }
    Ok(())
}

/// Generator of spatial translations on the Fock side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// `H_C = dΓ(b) + V_C`.
    Continuum,
    /// `-a⁻¹ log(e^{-a dΓ(b)/2} e^{-a V_C} e^{-a dΓ(b)/2})`, the exact
    /// generator of the lattice transfer matrix with spacing `a`.
    LatticeTransfer { a: f64 },
}

pub struct FockSide {
    pub basis: FockBasis,
    pub generator: Generator,
    /// Lowest eigenvalue of the generator.
    pub energy: f64,
    pub gap: f64,
    pub h_ren: Arc<RealOperator>,
    pub omega: Vec<C>,
    spectral: OnceLock<Spectral>,
}

fn dense_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

fn dense_to_operator(label: &str, m: &DMatrix<f64>) -> Result<RealOperator> {
    let n = m.nrows();
    let scale = m.amax();
    let rows = (0..n)
        .map(|i| (0..n).filter_map(|j| {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            (v.abs() > 1e-15 * scale).then_some((j, v))
        }).collect())
        .collect();
    Ok(RealOperator::new(label, Csr::from_rows(n, rows))?)
}

impl FockSide {
    pub fn new(cfg: &CrossConfig, generator: Generator) -> Result<Self> {
        let basis = FockBasis::new(cfg.basis_spec()?)?;
        let poly = WickPolynomial::new(cfg.coeffs(), 0.0);
        let free = build_free(&basis);
        let vc = build_vc(&basis, &poly, cfg.nt())?;
        let h = match generator {
            Generator::Continuum => hamiltonian(&free, &vc)?,
            Generator::LatticeTransfer { a } => {
                if basis.dim() > 3000 {
                    return Err(SchwingerError::Unsupported(format!("dense transfer generator at dimension {}", basis.dim())));
                }
                let half = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
                    basis.dim(),
                    free.matrix().diagonal_entries().into_iter().map(|e| (-0.5 * a * e).exp()),
                ));
                let kick = dense_function(&vc.matrix().to_dense(), |v| (-a * v).exp());
                let t = &half * kick * &half;
                dense_to_operator("H_lattice", &dense_function(&t, |v| -v.max(f64::MIN_POSITIVE).ln() / a))?
            }
        };
        let gs = ground_state(&h)?;
        let omega = gs.vector_complex();
        Ok(FockSide {
            basis,
            generator,
            energy: gs.energy,
            gap: gs.gap,
            h_ren: Arc::new(renormalized(&h, &gs)),
            omega,
            spectral: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Eigendecomposition of `H^ren`, computed on first use.
    pub fn spectral(&self) -> &Spectral {
        self.spectral.get_or_init(|| Spectral::new(&self.h_ren))
    }

    /// The Fock vacuum `Ω°`.
    pub fn free_vacuum(&self) -> Vec<C> {
        let mut v = vec![C::new(0.0, 0.0); self.dim()];
        v[self.basis.vacuum()] = C::new(1.0, 0.0);
        v
    }

    pub fn problem(&self, drive: Drive) -> Result<PropagatorProblem> {
        Ok(PropagatorProblem::new(self.h_ren.clone(), drive, C::new(1.0, 0.0))?.with_tol(1e-11))
    }

    /// `e^{-τ H^ren} v`.
    pub fn relax(&self, v: &[C], tau: f64) -> Result<Vec<C>> {
        Ok(self.problem(Drive::zero())?.apply_u(0.0, tau, v)?.value)
    }

    /// The drive `x ↦ φ_F(f_x)` of a lattice test function: one kick
    /// `a_x φ_F(f(·, x_i))` per spatial site carrying weight.
    pub fn site_drive(&self, lattice: &LatticeSpec, f: &TestFunction) -> Result<Drive> {
        let mut kicks = Vec::new();
        for i in 0..lattice.nx {
            let g = f.space_slice(i);
            if g.iter().all(|v| *v == 0.0) {
                continue;
            }
            let coeffs = mode_coefficients(&self.basis, lattice, &g, false)?;
            kicks.push(Kick {
                x: lattice.space_coord(i),
                weight: lattice.a_x(),
                op: Arc::new(field_operator(&self.basis, &coeffs)?),
            });
        }
        Ok(Drive::impulses(kicks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_matched() {
        let cfg = CrossConfig::default();
        check_matched(&cfg.kernel().unwrap(), &cfg.basis_spec().unwrap()).unwrap();
        cfg.check_cutoffs(1.0, 2.0).unwrap();
        assert!(cfg.check_cutoffs(1.01, 2.0).is_err());
        let other = CrossConfig { modes: 3, ..cfg };
        assert!(matches!(
            check_matched(&cfg.kernel().unwrap(), &other.basis_spec().unwrap()),
            Err(SchwingerError::TruncationMismatch(_))
        ));
    }

    #[test]
    fn lattice_generator_approaches_continuum() {
        let cfg = CrossConfig {
            modes: 1,
            n_max: 6,
            lambda: 0.3,
            ..Default::default()
        };
        let cont = FockSide::new(&cfg, Generator::Continuum).unwrap();
        let coarse = FockSide::new(&cfg, Generator::LatticeTransfer { a: 0.1 }).unwrap();
        let fine = FockSide::new(&cfg, Generator::LatticeTransfer { a: 0.05 }).unwrap();
        let (d1, d2) = ((coarse.energy - cont.energy).abs(), (fine.energy - cont.energy).abs());
        assert!(d2 < d1 && d1 < 1e-2, "{d1} {d2}");
        // Strang splitting: second order in the spacing.
        assert!((d1 / d2 - 4.0).abs() < 0.5, "{}", d1 / d2);
    }
}
