use num_complex::Complex64;
use pphi2_core::WickPolynomial;
use pphi2_fock::operators::{default_nodes, h_minus_half_inner};
use pphi2_fock::{build_free, build_vc, field_operator, hamiltonian, FockBasis, FockBasisSpec};
use proptest::prelude::*;

fn binom(n: u128, k: u128) -> u128 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dimension_is_a_binomial(modes in 0usize..3, n_max in 0usize..7) {
        let spec = FockBasisSpec::new(1.0, 1.0, modes, n_max).unwrap();
        let m = (2 * modes + 1) as u128;
        prop_assert_eq!(spec.dimension(), binom(n_max as u128 + m, m));
        let basis = FockBasis::new(spec).unwrap();
        prop_assert_eq!(basis.dim() as u128, spec.dimension());
        prop_assert_eq!(basis.vacuum(), 0);
        for s in 0..basis.dim() {
            prop_assert_eq!(basis.find(basis.occupation(s)), Some(s));
        }
    }

    #[test]
    fn hamiltonians_are_symmetric(
        modes in 0usize..3,
        n_max in 1usize..5,
        p2 in -0.5f64..1.0,
        p4 in 0.01f64..1.0,
        p6 in 0.0f64..0.3,
        beta in 0.5f64..2.0,
        mass in 0.5f64..2.0,
    ) {
        let basis = FockBasis::new(FockBasisSpec::new(beta, mass, modes, n_max).unwrap()).unwrap();
        let poly = WickPolynomial::new(vec![0.1, 0.0, p2, 0.0, p4, 0.0, p6], 0.0);
        let vc = build_vc(&basis, &poly, default_nodes(6, modes)).unwrap();
        let h = hamiltonian(&build_free(&basis), &vc).unwrap();
        prop_assert!(h.matrix().hermiticity_defect() <= 1e-12 * h.matrix().max_abs().max(1.0));
    }

    #[test]
    fn field_vacuum_two_point(re in proptest::collection::vec(-1.0f64..1.0, 5), im in proptest::collection::vec(-1.0f64..1.0, 5)) {
        let basis = FockBasis::new(FockBasisSpec::new(1.0, 1.0, 2, 3).unwrap()).unwrap();
        let g: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
        let h: Vec<Complex64> = g.iter().rev().map(|c| c * Complex64::new(0.5, -0.2)).collect();
        let (pg, ph) = (field_operator(&basis, &g).unwrap(), field_operator(&basis, &h).unwrap());
        let mut vac = vec![Complex64::new(0.0, 0.0); basis.dim()];
        vac[0] = Complex64::new(1.0, 0.0);
        let (mut a, mut b) = (vac.clone(), vac.clone());
        pg.apply_complex(&vac, &mut a);
        ph.apply_complex(&vac, &mut b);
        let two: Complex64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
        prop_assert!((two - h_minus_half_inner(&basis, &g, &h)).norm() < 1e-12);
    }
}
