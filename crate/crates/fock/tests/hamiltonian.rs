use approx::assert_abs_diff_eq;
use num_complex::Complex64;
use pphi2_core::{CovKernel, LatticeSpec, SpatialSymbol, TestFunction, WickPolynomial};
use pphi2_fock::ground::{ground_state_with, low_spectrum, EigenOptions};
use pphi2_fock::heatprop::{Drive, PropagatorProblem};
use pphi2_fock::operators::{default_nodes, mode_coefficients};
use pphi2_fock::{build_free, build_vc, field_operator, ground_state, hamiltonian, FockBasis, FockBasisSpec};
use std::sync::Arc;

fn phi4(l: f64) -> WickPolynomial<f64> {
    WickPolynomial::new(vec![0.0, 0.0, 0.0, 0.0, l], 0.0)
}

fn energy(modes: usize, n_max: usize, l: f64) -> f64 {
    let spec = FockBasisSpec::new(1.0, 1.0, modes, n_max).unwrap().with_cap(60_000);
    let basis = FockBasis::new(spec).unwrap();
    let h = hamiltonian(&build_free(&basis), &build_vc(&basis, &phi4(l), default_nodes(4, modes)).unwrap()).unwrap();
    ground_state(&h).unwrap().energy
}

#[test]
fn single_mode_quadratic_matches_oscillator() {
    // K = 0, P = σx²: a harmonic oscillator of frequency (m² + 2σ)^{1/2}
    // shifted by -m/2 - σ/(2m).
    let (m, sigma) = (1.0, 0.5);
    let basis = FockBasis::new(FockBasisSpec::new(1.0, m, 0, 60).unwrap()).unwrap();
    let poly = WickPolynomial::new(vec![0.0, 0.0, sigma], 0.0);
    let h = hamiltonian(&build_free(&basis), &build_vc(&basis, &poly, default_nodes(2, 0)).unwrap()).unwrap();
    let lines = low_spectrum(&h, &basis, 5, None).unwrap();
    let omega = (m * m + 2.0 * sigma).sqrt();
    for (k, line) in lines.iter().enumerate() {
        let exact = omega * (k as f64 + 0.5) - m / 2.0 - sigma / (2.0 * m);
        assert_abs_diff_eq!(line.energy, exact, epsilon = 1e-8);
    }
}

#[test]
fn ground_energy_is_stable_under_truncation() {
    let low = energy(2, 8, 0.2);
    let high = energy(2, 18, 0.2);
    assert!((low - high).abs() < 1e-4, "{low} vs {high}");
    assert!(low < 0.0);
}

#[test]
fn ground_energy_decreases_with_cap() {
    // Nested truncations compress the same operator, so the minimum falls.
    let es: Vec<f64> = (2..=9).map(|n| energy(1, n, 0.5)).collect();
    for w in es.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{es:?}");
    }
}

#[test]
fn lanczos_handles_large_truncations() {
    let spec = FockBasisSpec::new(1.0, 1.0, 2, 12).unwrap();
    let basis = FockBasis::new(spec).unwrap();
    assert!(basis.dim() > 1500);
    let h = hamiltonian(&build_free(&basis), &build_vc(&basis, &phi4(0.2), default_nodes(4, 2)).unwrap()).unwrap();
    let gs = ground_state_with(&h, EigenOptions::default()).unwrap();
    assert!(gs.gap > 0.5 && gs.gap < 1.5, "gap {}", gs.gap);
    assert!(gs.vacuum_overlap() > 0.9);
}

#[test]
fn free_fock_correlations_match_transfer_lattice() {
    // K = 2 against n_t = 6 with the Nyquist mode removed: the lattice site
    // fields then carry the same covariance as the Fock field operators, up
    // to periodic images at distance 2L - Δx, negligible here.
    let lat = LatticeSpec::new(1.0, 12.0, 6, 96, 1.0).unwrap();
    let kernel = CovKernel::with_options(lat, SpatialSymbol::Transfer, Some(2)).unwrap();
    let basis = FockBasis::new(FockBasisSpec::new(1.0, 1.0, 2, 4).unwrap()).unwrap();
    let g1 = [0.3, 1.0, -0.2, 0.1, 0.5, 0.7];
    let g2 = [1.0, 0.0, 0.4, -0.3, 0.2, 0.0];
    let (i1, i2) = (45usize, 49usize);

    let site = |g: &[f64], i: usize| {
        let mut h = vec![0.0; lat.nx];
        h[i] = 1.0 / lat.a_x();
        TestFunction::tensor(lat, g, &h).unwrap()
    };
    let lattice_value = kernel.quad(&site(&g1, i1), &site(&g2, i2)).unwrap();

    let c1 = mode_coefficients(&basis, &lat, &g1, true).unwrap();
    let c2 = mode_coefficients(&basis, &lat, &g2, true).unwrap();
    let free = Arc::new(build_free(&basis));
    let vac: Vec<Complex64> = (0..basis.dim()).map(|i| Complex64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0)).collect();
    let phi1 = field_operator(&basis, &c1).unwrap();
    let phi2 = Arc::new(field_operator(&basis, &c2).unwrap());
    // e^{-|x₁-x₂| dΓ(b)} between the two insertions.
    let dx = (i2 - i1) as f64 * lat.a_x();
    let mut ket = vec![Complex64::new(0.0, 0.0); basis.dim()];
    phi2.apply_complex(&vac, &mut ket);
    let p = PropagatorProblem::new(free, Drive::zero(), Complex64::new(0.0, 0.0)).unwrap();
    let moved = p.apply_u(0.0, dx, &ket).unwrap().value;
    let mut bra = vec![Complex64::new(0.0, 0.0); basis.dim()];
    phi1.apply_complex(&vac, &mut bra);
    let fock_value: Complex64 = bra.iter().zip(&moved).map(|(a, b)| a.conj() * b).sum();
    assert_abs_diff_eq!(fock_value.re, lattice_value, epsilon = 1e-10);
    assert_abs_diff_eq!(fock_value.im, 0.0, epsilon = 1e-12);
}
