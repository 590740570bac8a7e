use num_complex::Complex64;
use pphi2_core::covariance::{matsubara_identity, matsubara_sum_accelerated, thermal_closed_form};
use pphi2_core::wick::{rational, WickPolynomial};
use pphi2_core::{CovKernel, FourierPlan, LatticeSpec, SpatialSymbol, TestFunction};
use proptest::prelude::*;

fn lattice() -> impl Strategy<Value = LatticeSpec> {
    (0.5f64..3.0, 1.0f64..4.0, 2usize..5, 2usize..5, 0.3f64..2.0)
        .prop_map(|(beta, l, kt, kx, m)| LatticeSpec::new(beta, l, 2 * kt, 4 * kx, m).unwrap())
}

fn symbol() -> impl Strategy<Value = SpatialSymbol> {
    prop_oneof![Just(SpatialSymbol::Continuum), Just(SpatialSymbol::FiniteDifference), Just(SpatialSymbol::Transfer)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fourier_round_trip(spec in lattice(), seed in 0u64..1000) {
        let plan = FourierPlan::new(spec);
        let data: Vec<Complex64> = (0..spec.sites())
            .map(|i| Complex64::new(((i as u64 * 7919 + seed) % 97) as f64 / 97.0 - 0.5, 0.0))
            .collect();
        let mut buf = data.clone();
        plan.forward(&mut buf).unwrap();
        plan.inverse(&mut buf).unwrap();
        for (a, b) in buf.iter().zip(&data) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn covariance_is_symmetric_and_positive(spec in lattice(), sym in symbol(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let kernel = CovKernel::with_options(spec, sym, None).unwrap();
        let f = TestFunction::from_fn(spec, |t, x| (a * x).sin() + (t * b).cos() * (-x * x).exp()).unwrap();
        let g = TestFunction::from_fn(spec, |t, x| (-(x - a).powi(2)).exp() * (1.0 + 0.3 * t)).unwrap();
        let (ff, fg, gf) = (kernel.quad(&f, &f).unwrap(), kernel.quad(&f, &g).unwrap(), kernel.quad(&g, &f).unwrap());
        prop_assert!(ff >= 0.0);
        prop_assert!((fg - gf).abs() <= 1e-12 * fg.abs().max(1.0));
        prop_assert!(fg * fg <= ff * kernel.quad(&g, &g).unwrap() * (1.0 + 1e-12) + 1e-15);
        prop_assert!(kernel.multiplier().iter().all(|m| *m > 0.0));
        // Aliased images push the transfer symbol slightly above 1/m².
        if sym != SpatialSymbol::Transfer {
            let cap = 1.0 / (spec.mass * spec.mass);
            prop_assert!(kernel.multiplier().iter().all(|m| *m <= cap));
        }
    }

    #[test]
    fn matsubara_tail_bound(t_frac in 0.0f64..1.0, eps in 0.05f64..10.0, beta in 0.2f64..10.0, n in 10usize..2000) {
        let (s, c) = matsubara_identity(t_frac * beta, eps, beta, n).unwrap();
        prop_assert!((s - c).abs() < 3.0 * beta / (2.0 * std::f64::consts::PI.powi(2) * n as f64));
        let acc = matsubara_sum_accelerated(t_frac * beta, eps, beta, 400).unwrap();
        prop_assert!((acc - thermal_closed_form(t_frac * beta, eps, beta)).abs() < 1e-6 * c.abs().max(1.0));
    }

    #[test]
    fn reorder_preserves_values(coeffs in proptest::collection::vec(-3.0f64..3.0, 1..8), c1 in 0.0f64..2.0, c2 in 0.0f64..2.0, x in -3.0f64..3.0) {
        let p = WickPolynomial::new(coeffs, c1);
        let q = p.reorder(c2);
        prop_assert!((p.eval_f64(x) - q.eval_f64(x)).abs() < 1e-9 * (1.0 + p.eval_f64(x).abs()));
        prop_assert_eq!(p.degree(), q.degree());
    }

    #[test]
    fn rational_reorder_is_an_involution(nums in proptest::collection::vec(-40i64..40, 1..9), c1 in 0i64..30, c2 in 0i64..30) {
        let p = WickPolynomial::new(nums.into_iter().map(|v| rational(v, 3)).collect(), rational(c1, 4));
        prop_assert_eq!(p.reorder(rational(c2, 7)).reorder(rational(c1, 4)), p);
    }

    #[test]
    fn time_shifts_preserve_pairings(spec in lattice(), s in 0i64..8) {
        let kernel = CovKernel::new(spec);
        let f = TestFunction::from_fn(spec, |t, x| (1.0 + t) * (-x * x).exp()).unwrap();
        let g = TestFunction::from_fn(spec, |t, x| (2.0 * t).cos() * (-(x - 0.5).powi(2)).exp()).unwrap();
        let a = kernel.quad(&f, &g).unwrap();
        let b = kernel.quad(&f.shift_time(s), &g.shift_time(s)).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }
}
