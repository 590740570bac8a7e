use num_complex::Complex64;
use pphi2_core::interaction::min_hermitian_eigenvalue;
use pphi2_core::{CovKernel, InteractionSpec, LatticeSpec, TestFunction};
use pphi2_schwinger::correlations::{euclidean_green, Cylinder};
use pphi2_schwinger::crosscheck::{band_limited_bump, moment_formula_check, generating_functional_check, thermo_limit_scan, CrosscheckReport, LatticeMode};
use pphi2_schwinger::report::all_pass;
use pphi2_schwinger::CrossConfig;
use proptest::prelude::*;

fn small(lambda: f64) -> CrossConfig {
    CrossConfig {
        length: 9.0,
        nx: 360,
        modes: 1,
        n_max: 6,
        lambda,
        samples: 20_000,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn free_identity_holds_for_band_limited_functions(
        amp in 0.2f64..1.5,
        c1 in -0.6f64..0.6,
        s1 in -0.6f64..0.6,
        centre in -0.3f64..0.3,
    ) {
        let cfg = small(0.0);
        let f = band_limited_bump(&cfg.lattice().unwrap(), amp, &[(0, 1.0, 0.0), (1, c1, s1)], centre, 0.6).unwrap();
        let rep = generating_functional_check(&cfg, "free", &f, 1.0, 2.0, LatticeMode::Exact).unwrap();
        prop_assert!(rep.check.pass, "{:?}", rep.check);
    }

    #[test]
    fn free_generating_functional_is_of_positive_type(
        weights in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -2.0f64..2.0), 5),
    ) {
        let spec = LatticeSpec::new(1.0, 4.0, 8, 32, 1.0).unwrap();
        let kernel = CovKernel::new(spec);
        let fs: Vec<TestFunction> = weights
            .iter()
            .map(|&(c, s, x0)| band_limited_bump(&spec, 1.0, &[(0, 1.0, 0.0), (1, c, s)], x0, 1.0).unwrap())
            .collect();
        let n = fs.len();
        let mut m = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let d = fs[i].add(&fs[j].scaled(-1.0)).unwrap();
                m[i * n + j] = Complex64::new((-0.5 * kernel.quad(&d, &d).unwrap()).exp(), 0.0);
            }
        }
        prop_assert!(min_hermitian_eigenvalue(&m, n) >= -1e-12);
    }
}

#[test]
fn free_scan_is_flat() {
    let cfg = small(0.0);
    let f = band_limited_bump(&cfg.lattice().unwrap(), 0.9, &[(0, 1.0, 0.0), (1, 0.3, 0.2)], 0.0, 1.0).unwrap();
    let scan = thermo_limit_scan(&cfg, &f, 1.0, &[1.5, 2.0, 3.0, 4.0]).unwrap();
    assert!(all_pass(&scan.checks), "{:?}", scan.checks);
    for r in &scan.rows {
        assert!((r.fock - scan.rows[0].fock).abs() < 1e-8);
        assert!((r.fock - scan.limit_re).abs() < 1e-8);
    }
}

#[test]
fn interacting_scan_settles_monotonically() {
    let cfg = CrossConfig { samples: 8000, ..small(0.3) };
    let f = band_limited_bump(&cfg.lattice().unwrap(), 0.9, &[(0, 1.0, 0.0)], 0.0, 1.0).unwrap();
    let scan = thermo_limit_scan(&cfg, &f, 1.0, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    assert!(all_pass(&scan.checks), "{:?}", scan.checks);
    assert!(scan.checks.iter().any(|c| c.name.contains("monotone")));
    assert!(scan.rows.last().unwrap().distance_to_limit < 1e-3);
}

#[test]
fn odd_functions_have_vanishing_first_moment() {
    let cfg = small(0.2);
    let f = band_limited_bump(&cfg.lattice().unwrap(), 1.0, &[(1, 0.0, 1.0)], 0.0, 1.0).unwrap();
    let rep = moment_formula_check(&cfg, &f, 1.0, 2.0, 1).unwrap();
    assert!(rep.fock.abs() < 1e-10, "{rep:?}");
    assert!(rep.check.pass, "{rep:?}");
}

#[test]
fn green_function_of_one_factor_ignores_its_time() {
    let spec = LatticeSpec::new(1.0, 3.0, 8, 48, 1.0).unwrap();
    let kernel = CovKernel::new(spec);
    let inter = InteractionSpec::phi4(&kernel, 0.2, 2.0).unwrap();
    let h: Vec<f64> = (0..spec.nx).map(|i| (-spec.space_coord(i).powi(2)).exp()).collect();
    let a = Cylinder::ExpSquare { h };
    let v0 = euclidean_green(&kernel, &inter, &[(a.clone(), 0.0)], 20_000, 5).unwrap().value;
    let v1 = euclidean_green(&kernel, &inter, &[(a, 0.375)], 20_000, 5).unwrap().value;
    assert!((v0.value - v1.value).abs() < 4.0 * v0.stderr.hypot(v1.stderr), "{v0:?} {v1:?}");
}

#[test]
fn reports_round_trip_through_json() {
    let cfg = small(0.0);
    let f = band_limited_bump(&cfg.lattice().unwrap(), 0.5, &[(0, 1.0, 0.0)], 0.0, 1.0).unwrap();
    let rep = generating_functional_check(&cfg, "json", &f, 1.0, 2.0, LatticeMode::Exact).unwrap();
    let text = serde_json::to_string(&rep).unwrap();
    let back: CrosscheckReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, rep);
    assert!(serde_json::from_str::<CrossConfig>(r#"{"beta": 1.0, "bogus": 2}"#).is_err());
}
