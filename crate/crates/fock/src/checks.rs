//! Empirical operator inequalities relating `φ_F(g)`, `dΓ(b)` and `H_C`, and
//! the joint spectrum of `(H_C^ren, P_C)`.
//!
//! With `c = 1 - E_C` (so `H_C + c ≥ 1`) the fitted constants are
//! - `dΓ(b) + 1 ≤ Ĉ (H_C + c)`: `Ĉ = λ_max((H+c)^{-1/2}(dΓ(b)+1)(H+c)^{-1/2})`;
//! - `‖φ(g)(H+c)^{-1/2}‖ ≤ Ĉ‖g‖_{H^{-1/2}}`;
//! - `±φ(g) ≤ Ĉ‖g‖_{H^{-1/2}}(H+c)^{1/2}`: `Ĉ = max|eig((H+c)^{-1/4}φ(H+c)^{-1/4})| / ‖g‖`;
//! - `±φ(g) ≤ Ĉ‖g‖_{H^{-1}}(H+c)`: `Ĉ = max|eig((H+c)^{-1/2}φ(H+c)^{-1/2})| / ‖g‖_{H^{-1}}`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use pphi2_core::WickPolynomial;

use crate::basis::{FockBasis, FockBasisSpec};
use crate::error::{FockError, Result};
use crate::ground::{ground_state, momentum_sectors};
use crate::operators::{build_free, build_vc, field_operator, h_minus_half_norm, h_minus_one_norm, hamiltonian, RealOperator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundLevel {
    pub n_max: usize,
    pub dim: usize,
    pub ground_energy: f64,
    pub shift: f64,
    pub number_bound: f64,
    pub resolvent_bound: Vec<f64>,
    pub half_form_bound: Vec<f64>,
    pub form_bound: Vec<f64>,
}

impl BoundLevel {
    fn maxima(&self) -> [f64; 4] {
        let m = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        [self.number_bound, m(&self.resolvent_bound), m(&self.half_form_bound), m(&self.form_bound)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub levels: Vec<BoundLevel>,
    pub slack: f64,
    /// Every constant is finite and the family maxima at each truncation
    /// stay within `1 + slack` of those at the first.
    pub uniform: bool,
}

fn power(eig: &SymmetricEigen<f64, nalgebra::Dyn>, s: f64) -> DMatrix<Complex64> {
    let v = &eig.eigenvectors;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| e.powf(s)));
    (v * d * v.transpose()).map(|x| Complex64::new(x, 0.0))
}

fn hermitian_extremes(m: &DMatrix<Complex64>) -> (f64, f64) {
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let e = sym.symmetric_eigenvalues();
    (e.min(), e.max())
}

/// Constants for one truncation, `h` being `H_C` on `basis` and `family`
/// given by Matsubara coefficients per mode slot.
pub fn bound_constants(h: &RealOperator, basis: &FockBasis, family: &[Vec<Complex64>]) -> Result<BoundLevel> {
    if h.dim() != basis.dim() {
        return Err(FockError::DimensionMismatch(h.dim(), basis.dim()));
    }
    let gs = ground_state(h)?;
    let shift = 1.0 - gs.energy;
    let eig = SymmetricEigen::new(h.shifted(shift, "H_C + c").matrix().to_dense());
    let inv_half = power(&eig, -0.5);
    let inv_quarter = power(&eig, -0.25);

    let number = build_free(basis).shifted(1.0, "dGamma(b) + 1").matrix().to_dense_complex();
    let number_bound = hermitian_extremes(&(&inv_half * number * &inv_half)).1;

    let mut resolvent_bound = Vec::new();
    let mut half_form_bound = Vec::new();
    let mut form_bound = Vec::new();
    for g in family {
        let n_half = h_minus_half_norm(basis, g);
        let n_one = h_minus_one_norm(basis, g);
        if n_half == 0.0 {
            resolvent_bound.push(0.0);
            half_form_bound.push(0.0);
            form_bound.push(0.0);
            continue;
        }
        let phi = field_operator(basis, g)?.matrix().to_dense();
        let a = &phi * &inv_half;
        let (_, top) = hermitian_extremes(&(a.adjoint() * &a));
        resolvent_bound.push(top.max(0.0).sqrt() / n_half);
        let (lo, hi) = hermitian_extremes(&(&inv_quarter * &phi * &inv_quarter));
        half_form_bound.push(lo.abs().max(hi.abs()) / n_half);
        let (lo, hi) = hermitian_extremes(&(&inv_half * &phi * &inv_half));
        form_bound.push(lo.abs().max(hi.abs()) / n_one);
    }
    Ok(BoundLevel {
        n_max: basis.spec().n_max,
        dim: basis.dim(),
        ground_energy: gs.energy,
        shift,
        number_bound,
        resolvent_bound,
        half_form_bound,
        form_bound,
    })
}

/// Fits the constants at each cap in `n_max_levels` (ascending) and judges
/// their uniformity.
pub fn bound_checks(
    spec: FockBasisSpec,
    n_max_levels: &[usize],
    poly: &WickPolynomial<f64>,
    nodes: usize,
    family: &[Vec<Complex64>],
    slack: f64,
) -> Result<BoundReport> {
    let mut levels = Vec::new();
    for &n in n_max_levels {
        let basis = FockBasis::new(FockBasisSpec { n_max: n, ..spec })?;
        let h = hamiltonian(&build_free(&basis), &build_vc(&basis, poly, nodes)?)?;
        levels.push(bound_constants(&h, &basis, family)?);
    }
    let uniform = match levels.first() {
        None => true,
        Some(first) => {
            let base = first.maxima();
            levels.iter().all(|l| {
                l.maxima()
                    .iter()
                    .zip(&base)
                    .all(|(v, b)| v.is_finite() && *v <= (1.0 + slack) * b + 1e-12)
            })
        }
    };
    Ok(BoundReport { levels, slack, uniform })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConePoint {
    pub energy: f64,
    pub momentum: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    pub commutator_norm: f64,
    pub eta: f64,
    pub window: f64,
    pub points: Vec<ConePoint>,
    pub pass: bool,
}

/// Frobenius norm of `[H, P_C]`, an upper bound on its operator norm.
pub fn momentum_commutator(h: &RealOperator, basis: &FockBasis) -> f64 {
    let nu = |s: usize| -> f64 { basis.occupation(s).iter().zip(basis.nu()).map(|(&o, v)| o as f64 * v).sum() };
    let p: Vec<f64> = (0..basis.dim()).map(nu).collect();
    let mut acc = 0.0;
    for i in 0..basis.dim() {
        for (j, v) in h.matrix().row(i) {
            acc += (v * (p[j] - p[i])).powi(2);
        }
    }
    acc.sqrt()
}

/// Joint spectrum of `(H_C^ren, P_C)` below `window`, checked against
/// `|p| ≤ e(1 + η)`. `h` is `H_C^ren` (ground energy 0).
pub fn spectrum_cone_check(h: &RealOperator, basis: &FockBasis, window: f64, eta: f64) -> Result<ConeReport> {
    let commutator_norm = momentum_commutator(h, basis);
    if commutator_norm > 1e-10 * h.matrix().max_abs().max(1.0) {
        return Err(FockError::CommutatorTooLarge(commutator_norm));
    }
    let beta = basis.spec().beta;
    let mut points = Vec::new();
    for (p, states) in momentum_sectors(basis, None) {
        if states.len() > 4000 {
            return Err(FockError::Unsupported(format!("momentum sector of size {} too large for dense diagonalization", states.len())));
        }
        let block = h.matrix().restrict(&states).to_dense();
        let momentum = 2.0 * std::f64::consts::PI * p as f64 / beta;
        for e in block.symmetric_eigenvalues().iter().copied().filter(|&e| e <= window) {
            let inside = momentum.abs() <= e.max(0.0) * (1.0 + eta) + 1e-9;
            points.push(ConePoint { energy: e, momentum, inside });
        }
    }
    points.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let pass = points.iter().all(|p| p.inside);
    Ok(ConeReport {
        commutator_norm,
        eta,
        window,
        points,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::renormalized;
    use crate::operators::default_nodes;

    fn phi4(l: f64) -> WickPolynomial<f64> {
        WickPolynomial::new(vec![0.0, 0.0, 0.0, 0.0, l], 0.0)
    }

    fn family() -> Vec<Vec<Complex64>> {
        vec![
            vec![Complex64::new(0.0, 0.0); 5],
            vec![0.1, 0.3, 1.0, 0.3, 0.1].into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
            vec![0.0.into(), Complex64::new(0.5, 0.5), Complex64::new(0.2, 0.0), Complex64::new(0.5, -0.5), 0.0.into()],
        ]
    }

    #[test]
    fn constants_are_uniform_and_homogeneous() {
        let spec = FockBasisSpec::new(1.0, 1.0, 2, 4).unwrap();
        let rep = bound_checks(spec, &[4, 6], &phi4(0.2), default_nodes(4, 2), &family(), 0.5).unwrap();
        assert!(rep.uniform, "{rep:?}");
        let l = &rep.levels[0];
        assert_eq!(l.resolvent_bound[0], 0.0);
        assert!(l.number_bound.is_finite() && l.number_bound >= 1.0);

        let basis = FockBasis::new(spec).unwrap();
        let h = hamiltonian(&build_free(&basis), &build_vc(&basis, &phi4(0.2), default_nodes(4, 2)).unwrap()).unwrap();
        let doubled: Vec<Vec<Complex64>> = family().iter().map(|g| g.iter().map(|c| c * 2.0).collect()).collect();
        let once = bound_constants(&h, &basis, &family()).unwrap();
        let twice = bound_constants(&h, &basis, &doubled).unwrap();
        for i in 1..3 {
            assert!((once.half_form_bound[i] - twice.half_form_bound[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn free_cone() {
        let basis = FockBasis::new(FockBasisSpec::new(1.0, 1.0, 2, 3).unwrap()).unwrap();
        let rep = spectrum_cone_check(&build_free(&basis), &basis, 20.0, 0.0).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.points[0].energy, 0.0);
        assert_eq!(rep.points[0].momentum, 0.0);
    }

    #[test]
    fn interacting_cone_and_aliasing_detection() {
        let basis = FockBasis::new(FockBasisSpec::new(1.0, 1.0, 2, 5).unwrap()).unwrap();
        let h = hamiltonian(&build_free(&basis), &build_vc(&basis, &phi4(0.2), default_nodes(4, 2)).unwrap()).unwrap();
        let gs = ground_state(&h).unwrap();
        let rep = spectrum_cone_check(&renormalized(&h, &gs), &basis, 15.0, 0.1).unwrap();
        assert!(rep.pass);
        assert!(rep.points.len() > 5);

        let aliased = hamiltonian(&build_free(&basis), &build_vc(&basis, &phi4(0.2), 6).unwrap()).unwrap();
        assert!(matches!(
            spectrum_cone_check(&aliased, &basis, 15.0, 0.1),
            Err(FockError::CommutatorTooLarge(_))
        ));
    }
}
