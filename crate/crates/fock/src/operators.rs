//! Operators on the truncated Fock space: `dΓ(b)`, `φ_F(g)`, `V_C`, `H_C`,
//! `P_C`.
//!
//! Circle functions enter through their orthonormal Matsubara coefficients
//! `ĝ_n = β^{-1/2} ∫ e^{-iν_n t} g(t) dt`, and
//! `φ_F(g) = Σ_n (2b_n)^{-1/2} (conj(ĝ_n) a_n + ĝ_n a_n†)`, so that
//! `(Ω, φ_F(g) φ_F(h) Ω) = Σ_n conj(ĝ_n) ĥ_n / (2b_n)`.
//! Creation operators are compressed to the truncated space: `a†` out of the
//! top shell is dropped.

use num_complex::Complex64;
use rayon::prelude::*;

use pphi2_core::lattice::{fourier_t_profile, LatticeSpec};
use pphi2_core::WickPolynomial;

use crate::basis::FockBasis;
use crate::error::{FockError, Result};
use crate::sparse::{Csr, Scalar};

const HERMITIAN_TOL: f64 = 1e-12;

/// Hermitian operator on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator<T: Scalar = f64> {
    label: String,
    matrix: Csr<T>,
}

pub type RealOperator = FockOperator<f64>;
pub type ComplexOperator = FockOperator<Complex64>;

impl<T: Scalar> FockOperator<T> {
    /// Fails unless `max |A_ij - conj(A_ji)| ≤ 1e-12·max(1, max |A_ij|)`.
    pub fn new(label: impl Into<String>, matrix: Csr<T>) -> Result<Self> {
        let label = label.into();
        let defect = matrix.hermiticity_defect();
        if defect > HERMITIAN_TOL * matrix.max_abs().max(1.0) {
            return Err(FockError::NotHermitian { label, defect });
        }
        Ok(FockOperator { label, matrix })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn matrix(&self) -> &Csr<T> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.matrix.apply_complex(x, y)
    }

    /// `(ψ, A ψ)`.
    pub fn expectation(&self, psi: &[Complex64]) -> Complex64 {
        let mut y = vec![Complex64::new(0.0, 0.0); psi.len()];
        self.apply_complex(psi, &mut y);
        psi.iter().zip(&y).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn add(&self, other: &Self, label: impl Into<String>) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(FockError::DimensionMismatch(self.dim(), other.dim()));
        }
        Ok(FockOperator {
            label: label.into(),
            matrix: self.matrix.add(&other.matrix),
        })
    }

    /// `A + c·Id`.
    pub fn shifted(&self, c: f64, label: impl Into<String>) -> Self {
        FockOperator {
            label: label.into(),
            matrix: self.matrix.shifted(T::from_real(c)),
        }
    }

    pub fn scaled(&self, s: f64, label: impl Into<String>) -> Self {
        FockOperator {
            label: label.into(),
            matrix: self.matrix.scaled(T::from_real(s)),
        }
    }

    pub fn to_complex(&self) -> ComplexOperator {
        FockOperator {
            label: self.label.clone(),
            matrix: self.matrix.to_complex(),
        }
    }
}

impl RealOperator {
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.apply(x, y)
    }
}

fn diagonal_operator(basis: &FockBasis, label: &str, weight: &[f64]) -> RealOperator {
    let d: Vec<f64> = (0..basis.dim())
        .map(|s| basis.occupation(s).iter().zip(weight).map(|(&o, w)| o as f64 * w).sum())
        .collect();
    FockOperator {
        label: label.into(),
        matrix: Csr::diagonal(&d),
    }
}

/// `H°_C = dΓ(b)`, diagonal with entries `Σ_n occ_n b_n`.
pub fn build_free(basis: &FockBasis) -> RealOperator {
    diagonal_operator(basis, "dGamma(b)", basis.b())
}

pub fn number_operator(basis: &FockBasis) -> RealOperator {
    diagonal_operator(basis, "N", &vec![1.0; basis.mode_count()])
}

/// `P_C = dΓ(ν)`, diagonal with entries `Σ_n occ_n ν_n`.
pub fn momentum_operator(basis: &FockBasis) -> RealOperator {
    diagonal_operator(basis, "P_C", basis.nu())
}

/// `φ_F(g)` from the Matsubara coefficients `ĝ_n`, indexed by mode slot
/// (`n = -K..=K`).
pub fn field_operator(basis: &FockBasis, coeffs: &[Complex64]) -> Result<ComplexOperator> {
    if coeffs.len() != basis.mode_count() {
        return Err(FockError::DimensionMismatch(coeffs.len(), basis.mode_count()));
    }
    let n_max = basis.spec().n_max;
    let w: Vec<f64> = basis.b().iter().map(|b| (2.0 * b).powf(-0.5)).collect();
    let cols: Vec<Vec<(usize, Complex64)>> = (0..basis.dim())
        .into_par_iter()
        .map(|s| {
            let mut occ = basis.occupation(s).to_vec();
            let total = basis.total(s);
            let mut col = Vec::with_capacity(2 * occ.len());
            for i in 0..occ.len() {
                if coeffs[i] == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let o = occ[i] as f64;
                if occ[i] > 0 {
                    occ[i] -= 1;
                    let r = basis.find(&occ).expect("lowered state in basis");
                    col.push((r, coeffs[i].conj() * w[i] * o.sqrt()));
                    occ[i] += 1;
                }
                if total < n_max {
                    occ[i] += 1;
                    let r = basis.find(&occ).expect("raised state in basis");
                    col.push((r, coeffs[i] * w[i] * (o + 1.0).sqrt()));
                    occ[i] -= 1;
                }
            }
            col
        })
        .collect();
    FockOperator::new("phi_F(g)", Csr::from_columns(basis.dim(), cols))
}

/// Matsubara coefficients, by mode slot, of a lattice time profile.
///
/// The lattice must share `β` with the basis. A profile with weight beyond
/// the cutoff is refused unless `project` is set, in which case those modes
/// are dropped.
pub fn mode_coefficients(basis: &FockBasis, lattice: &LatticeSpec, g: &[f64], project: bool) -> Result<Vec<Complex64>> {
    let beta = basis.spec().beta;
    if ((lattice.beta - beta) / beta).abs() > 1e-12 {
        return Err(FockError::Unsupported(format!(
            "lattice beta {} differs from Fock beta {}",
            lattice.beta, beta
        )));
    }
    let hat = fourier_t_profile(lattice, g)?;
    let scale = hat.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut out = vec![Complex64::new(0.0, 0.0); basis.mode_count()];
    for (k, c) in hat.iter().enumerate() {
        let n = LatticeSpec::signed_index(k, lattice.nt);
        match basis.slot(n) {
            Some(i) => out[i] = *c,
            None if !project && c.norm() > 1e-12 * scale.max(1e-300) => {
                return Err(FockError::ModeBeyondCutoff { mode: n, amplitude: c.norm() });
            }
            None => {}
        }
    }
    Ok(out)
}

/// `(g, (2b)^{-1} h)_{L²}`, the one-particle inner product.
pub fn h_minus_half_inner(basis: &FockBasis, g: &[Complex64], h: &[Complex64]) -> Complex64 {
    g.iter().zip(h).zip(basis.b()).map(|((a, c), b)| a.conj() * c / (2.0 * b)).sum()
}

/// `‖g‖_{H^{-1/2}}` in the `(g, (2b)^{-1} g)` convention.
pub fn h_minus_half_norm(basis: &FockBasis, g: &[Complex64]) -> f64 {
    h_minus_half_inner(basis, g, g).re.sqrt()
}

/// `‖b^{-1/2} g‖_{H^{-1/2}}`.
pub fn h_minus_one_norm(basis: &FockBasis, g: &[Complex64]) -> f64 {
    g.iter().zip(basis.b()).map(|(a, b)| a.norm_sqr() / (2.0 * b * b)).sum::<f64>().sqrt()
}

/// Trapezoid node count that integrates every product of `deg` mode
/// exponentials with `|n| ≤ K` exactly.
pub fn default_nodes(degree: usize, modes: usize) -> usize {
    (4 * degree * modes).max(8) + 1
}

// Ways to lower occupations by `counts`: amplitude Π sqrt(o!/(o-t)!) c^t,
// multinomial r!/Π t!.
#[derive(Clone)]
struct Branch {
    occ: Vec<u8>,
    amp: f64,
    momentum: i64,
}

fn expand(
    basis: &FockBasis,
    c: &[f64],
    branch: &Branch,
    pos: usize,
    left: usize,
    raise: bool,
    room: usize,
    out: &mut Vec<Branch>,
) {
    if left == 0 {
        out.push(branch.clone());
        return;
    }
    if pos == c.len() {
        return;
    }
    let o = branch.occ[pos] as usize;
    let max_t = if raise { left.min(room) } else { left.min(o) };
    let mut b = branch.clone();
    let mut factor = 1.0;
    for t in 0..=max_t {
        if t > 0 {
            // Multinomial r!/Π t! built as the product of binom(left, t)
            // pieces: here the running weight of choosing t of the `left`.
            let ratio = if raise { (o + t) as f64 } else { (o + 1 - t) as f64 };
            factor *= ratio.sqrt() * c[pos] * (left + 1 - t) as f64 / t as f64;
            if raise {
                b.occ[pos] += 1;
                b.momentum -= basis.label(pos);
            } else {
                b.occ[pos] -= 1;
                b.momentum += basis.label(pos);
            }
        }
        let next = Branch {
            occ: b.occ.clone(),
            amp: branch.amp * factor,
            momentum: b.momentum,
        };
        expand(basis, c, &next, pos + 1, left - t, raise, room - if raise { t } else { 0 }, out);
    }
}

/// `V_C = ∫_{S_β} :P(φ(t,0)): dt` on the truncated space.
///
/// The sharp-time field at cutoff `K` is
/// `φ(t) = Σ_n c_n (e^{iν_n t} a_n + e^{-iν_n t} a_n†)`,
/// `c_n = β^{-1/2} (2b_n)^{-1/2}`, and `:φ^k:` is its normal-ordered power
/// `Σ_j binom(k, j) (A†)^j A^{k-j}`. The `nodes`-point trapezoid rule in `t`
/// keeps terms whose annihilated minus created momentum labels vanish mod
/// `nodes`. The polynomial's Wick constant plays no role: normal ordering is
/// Wick ordering against the cutoff sharp-time covariance.
pub fn build_vc(basis: &FockBasis, poly: &WickPolynomial<f64>, nodes: usize) -> Result<RealOperator> {
    poly.check_bounded_below()?;
    if nodes == 0 {
        return Err(FockError::Unsupported("quadrature needs at least one node".into()));
    }
    let beta = basis.spec().beta;
    let n_max = basis.spec().n_max;
    let c: Vec<f64> = basis.b().iter().map(|b| (beta * 2.0 * b).powf(-0.5)).collect();
    let deg = if poly.is_zero() { 0 } else { poly.degree() };
    let nodes = nodes as i64;
    let binom = |n: usize, k: usize| -> f64 { (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64) };

    let cols: Vec<Vec<(usize, f64)>> = (0..basis.dim())
        .into_par_iter()
        .map(|s| {
            let occ = basis.occupation(s).to_vec();
            let total = basis.total(s);
            let root = Branch { occ, amp: 1.0, momentum: 0 };
            let lowered: Vec<Vec<Branch>> = (0..=deg)
                .map(|r| {
                    let mut out = Vec::new();
                    expand(basis, &c, &root, 0, r, false, 0, &mut out);
                    out
                })
                .collect();
            let mut col = Vec::new();
            let p0 = poly.coeff(0);
            if p0 != 0.0 {
                col.push((s, beta * p0));
            }
            for k in 1..=deg {
                let pk = poly.coeff(k);
                if pk == 0.0 {
                    continue;
                }
                for j in 0..=k {
                    let pref = beta * pk * binom(k, j);
                    for low in &lowered[k - j] {
                        let after = total - (k - j);
                        if after + j > n_max {
                            continue;
                        }
                        let mut raised = Vec::new();
                        expand(basis, &c, low, 0, j, true, n_max - after, &mut raised);
                        for fin in raised {
                            if fin.momentum.rem_euclid(nodes) != 0 {
                                continue;
                            }
                            let r = basis.find(&fin.occ).expect("state in basis");
                            col.push((r, pref * fin.amp));
                        }
                    }
                }
            }
            col
        })
        .collect();
    FockOperator::new("V_C", Csr::from_columns(basis.dim(), cols))
}

/// `H_C = dΓ(b) + V_C`.
pub fn hamiltonian(free: &RealOperator, vc: &RealOperator) -> Result<RealOperator> {
    free.add(vc, "H_C")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::FockBasisSpec;
    use approx::assert_abs_diff_eq;

    fn basis(k: usize, n: usize) -> FockBasis {
        FockBasis::new(FockBasisSpec::new(1.0, 1.0, k, n).unwrap()).unwrap()
    }

    fn poly(c: &[f64]) -> WickPolynomial<f64> {
        WickPolynomial::new(c.to_vec(), 0.0)
    }

    #[test]
    fn free_hamiltonian_entries() {
        let b = basis(1, 2);
        let h = build_free(&b);
        assert_eq!(h.matrix().get(0, 0), 0.0);
        let s0 = b.find(&[0, 1, 0]).unwrap();
        assert_eq!(h.matrix().get(s0, s0), 1.0);
        let s1 = b.find(&[0, 0, 1]).unwrap();
        assert_abs_diff_eq!(h.matrix().get(s1, s1), 6.3623, epsilon = 1e-4);
    }

    #[test]
    fn field_two_point_and_ccr() {
        let b = basis(1, 4);
        let g = vec![Complex64::new(0.3, 0.1), Complex64::new(0.5, 0.0), Complex64::new(0.3, -0.1)];
        let h = vec![Complex64::new(0.0, 0.2), Complex64::new(-0.4, 0.0), Complex64::new(0.0, -0.2)];
        let pg = field_operator(&b, &g).unwrap();
        let ph = field_operator(&b, &h).unwrap();
        let mut vac = vec![Complex64::new(0.0, 0.0); b.dim()];
        vac[0] = Complex64::new(1.0, 0.0);
        assert_abs_diff_eq!(pg.expectation(&vac).norm(), 0.0, epsilon = 1e-15);
        let mut u = vec![Complex64::new(0.0, 0.0); b.dim()];
        let mut v = u.clone();
        pg.apply_complex(&vac, &mut u);
        ph.apply_complex(&vac, &mut v);
        let two_point: Complex64 = u.iter().zip(&v).map(|(a, c)| a.conj() * c).sum();
        let exact = h_minus_half_inner(&b, &g, &h);
        assert_abs_diff_eq!((two_point - exact).norm(), 0.0, epsilon = 1e-14);

        // [φ(g), φ(h)] = 2i Im(g, (2b)^{-1} h) on states two shells below the cap.
        let dense_g = pg.matrix().to_dense();
        let dense_h = ph.matrix().to_dense();
        let comm = &dense_g * &dense_h - &dense_h * &dense_g;
        let expect = Complex64::new(0.0, 2.0 * exact.im);
        for s in 0..b.dim() {
            if b.total(s) + 2 <= 4 {
                assert_abs_diff_eq!((comm[(s, s)] - expect).norm(), 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn field_operator_is_hermitian() {
        let b = basis(2, 3);
        let g: Vec<Complex64> = (0..5).map(|i| Complex64::new(i as f64 * 0.1, 0.2 - i as f64 * 0.05)).collect();
        let op = field_operator(&b, &g).unwrap();
        assert!(op.matrix().hermiticity_defect() < 1e-15);
    }

    #[test]
    fn linear_interaction_couples_only_zero_mode() {
        let b = basis(2, 3);
        let v = build_vc(&b, &poly(&[0.0, 1.0]), default_nodes(1, 2));
        // Odd polynomials are not bounded below.
        assert!(v.is_err());
        let beta: f64 = 1.0;
        let expected = beta.sqrt() * (2.0f64).powf(-0.5);
        let vac_plus = b.find(&[0, 0, 1, 0, 0]).unwrap();
        let quad = build_vc(&b, &poly(&[0.0, 1.0, 1.0]), default_nodes(2, 2)).unwrap();
        let only_quadratic = build_vc(&b, &poly(&[0.0, 0.0, 1.0]), default_nodes(2, 2)).unwrap();
        let linear = quad.matrix().add(&only_quadratic.matrix().scaled(-1.0));
        assert_abs_diff_eq!(linear.get(vac_plus, 0), expected, epsilon = 1e-14);
        for n in [0usize, 1, 3, 4] {
            let mut occ = [0u8; 5];
            occ[n] = 1;
            assert_eq!(linear.get(b.find(&occ).unwrap(), 0), 0.0);
        }
    }

    #[test]
    fn normal_ordering_kills_vacuum_expectation() {
        let b = basis(2, 4);
        let v = build_vc(&b, &poly(&[0.0, 0.0, 1.0, 0.0, 0.5]), default_nodes(4, 2)).unwrap();
        assert_eq!(v.matrix().get(0, 0), 0.0);
        assert!(v.matrix().hermiticity_defect() < 1e-12);
    }

    #[test]
    fn quadratic_matrix_elements_by_hand() {
        // K = 0, P = x²: V = β c_0² (a² + 2a†a + a†²), c_0² = 1/(2mβ).
        let b = FockBasis::new(FockBasisSpec::new(2.0, 1.5, 0, 6).unwrap()).unwrap();
        let v = build_vc(&b, &poly(&[0.0, 0.0, 1.0]), 9).unwrap();
        let c2 = 1.0 / (2.0 * 1.5);
        for n in 0..=6usize {
            assert_abs_diff_eq!(v.matrix().get(n, n), 2.0 * c2 * n as f64, epsilon = 1e-13);
            if n + 2 <= 6 {
                let e = c2 * (((n + 1) * (n + 2)) as f64).sqrt();
                assert_abs_diff_eq!(v.matrix().get(n + 2, n), e, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn exact_and_aliased_quadrature() {
        // With nodes > deg·2K nothing aliases; with nodes = 3 and K = 2 the
        // pair (a_1 a_2) is kept at momentum 3 ≡ 0.
        let b = basis(2, 2);
        let p = poly(&[0.0, 0.0, 1.0]);
        let exact = build_vc(&b, &p, default_nodes(2, 2)).unwrap();
        let aliased = build_vc(&b, &p, 3).unwrap();
        let s = b.find(&[0, 0, 0, 1, 1]).unwrap();
        assert_eq!(exact.matrix().get(s, 0), 0.0);
        assert!(aliased.matrix().get(s, 0).abs() > 0.0);
    }

    #[test]
    fn projection_of_lattice_profiles() {
        let lat = LatticeSpec::new(1.0, 2.0, 8, 4, 1.0).unwrap();
        let b = basis(1, 2);
        let smooth: Vec<f64> = (0..8).map(|k| 1.0 + (lat.time_coord(k) * 2.0 * std::f64::consts::PI).cos()).collect();
        let c = mode_coefficients(&b, &lat, &smooth, false).unwrap();
        assert_abs_diff_eq!(c[1].re, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c[0].re, 0.5, epsilon = 1e-14);
        let rough: Vec<f64> = (0..8).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect();
        assert!(matches!(
            mode_coefficients(&b, &lat, &rough, false),
            Err(FockError::ModeBeyondCutoff { .. })
        ));
        assert!(mode_coefficients(&b, &lat, &rough, true).is_ok());
    }
}
