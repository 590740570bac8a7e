//! The free covariance `C = (D_t² + D_x² + m²)^{-1}` and its thermal kernels.
//!
//! All kernels are diagonal in Fourier space. The multiplier is stored in FFT
//! index order over `(n, j)`, time outer. The lattice field variance at a site
//! is `(β·2L)^{-1} Σ_{n,j} M(n, j)`.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{fourier_t_profile, fourier_x_profile, FourierPlan, LatticeSpec, TestFunction};
use crate::lattice::LatticeData;

/// Spatial part of the inverse-covariance symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialSymbol {
    /// `1/(ν² + p² + m²)` at the lattice frequencies.
    #[default]
    Continuum,
    /// `(4/a²) sin²(k a/2)` in both directions.
    FiniteDifference,
    /// Aliased sum of the continuum kernel over spatial images,
    /// `a_x sinh(a_x b) / (2b (cosh(a_x b) - cos(a_x p)))`, `b = (ν² + m²)^{1/2}`.
    /// Site fields then have exactly the sharp-space covariance `e^{-b|Δx|}/(2b)`.
    Transfer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovKernel {
    spec: LatticeSpec,
    symbol: SpatialSymbol,
    time_cutoff: Option<usize>,
    multiplier: Vec<f64>,
}

impl CovKernel {
    pub fn new(spec: LatticeSpec) -> Self {
        Self::with_options(spec, SpatialSymbol::Continuum, None).expect("continuum kernel is always valid")
    }

    /// Kernel with a chosen symbol and an optional Matsubara cutoff: modes with
    /// `|n| > time_cutoff` (the Nyquist mode included) get multiplier 0.
    pub fn with_options(spec: LatticeSpec, symbol: SpatialSymbol, time_cutoff: Option<usize>) -> Result<Self> {
        spec.validate()?;
        if let Some(k) = time_cutoff {
            if k > spec.nt / 2 {
                return Err(Error::OutOfRange {
                    what: "time cutoff",
                    detail: format!("{k} > n_t/2 = {}", spec.nt / 2),
                });
            }
        }
        let m2 = spec.mass * spec.mass;
        let (at, ax) = (spec.a_t(), spec.a_x());
        let mut multiplier = Vec::with_capacity(spec.sites());
        for n in 0..spec.nt {
            let nu = spec.matsubara(n);
            let label = LatticeSpec::signed_index(n, spec.nt).unsigned_abs() as usize;
            let masked = time_cutoff.is_some_and(|k| label > k);
            for j in 0..spec.nx {
                let p = spec.momentum(j);
                let value = if masked {
                    0.0
                } else {
                    match symbol {
                        SpatialSymbol::Continuum => 1.0 / (nu * nu + p * p + m2),
                        SpatialSymbol::FiniteDifference => {
                            let st = (nu * at / 2.0).sin() * 2.0 / at;
                            let sx = (p * ax / 2.0).sin() * 2.0 / ax;
                            1.0 / (st * st + sx * sx + m2)
                        }
                        SpatialSymbol::Transfer => {
                            let b = (nu * nu + m2).sqrt();
                            transfer_symbol(ax, b, p)
                        }
                    }
                };
                multiplier.push(value);
            }
        }
        Ok(CovKernel {
            spec,
            symbol,
            time_cutoff,
            multiplier,
        })
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn symbol(&self) -> SpatialSymbol {
        self.symbol
    }

    pub fn time_cutoff(&self) -> Option<usize> {
        self.time_cutoff
    }

    pub fn multiplier(&self) -> &[f64] {
        &self.multiplier
    }

    pub fn get(&self, n: usize, j: usize) -> f64 {
        self.multiplier[n * self.spec.nx + j]
    }

    /// Exact lattice variance of a site field, `(β·2L)^{-1} Σ M`.
    pub fn site_variance(&self) -> f64 {
        crate::stats::pairwise_sum(&self.multiplier) / (self.spec.beta * 2.0 * self.spec.length)
    }

    /// `C(f, g) = Σ_{n,j} Δp · conj(f̂) · M · ĝ`.
    pub fn quad(&self, f: &TestFunction, g: &TestFunction) -> Result<f64> {
        if *f.spec() != self.spec || *g.spec() != self.spec {
            return Err(Error::SpecMismatch);
        }
        let plan = FourierPlan::new(self.spec);
        let fh = spectrum(&plan, f.values())?;
        let gh = if std::ptr::eq(f, g) { fh.clone() } else { spectrum(&plan, g.values())? };
        let s: Vec<f64> = fh
            .iter()
            .zip(&gh)
            .zip(&self.multiplier)
            .map(|((a, b), m)| (a.conj() * b).re * m)
            .collect();
        Ok(crate::stats::pairwise_sum(&s) * self.spec.dp())
    }

    /// `C(g⊗h, g'⊗h')` from per-axis profiles.
    pub fn quad_separable(&self, g1: &[f64], h1: &[f64], g2: &[f64], h2: &[f64]) -> Result<f64> {
        let s = &self.spec;
        let (a1, b1) = (fourier_t_profile(s, g1)?, fourier_x_profile(s, h1)?);
        let (a2, b2) = (fourier_t_profile(s, g2)?, fourier_x_profile(s, h2)?);
        let mut acc = 0.0;
        for n in 0..s.nt {
            let tn = a1[n].conj() * a2[n];
            for j in 0..s.nx {
                acc += (tn * b1[j].conj() * b2[j]).re * self.get(n, j);
            }
        }
        Ok(acc * s.dp())
    }

    /// Lattice covariance of the sharp-time fields `φ(t₁, h₁)`, `φ(t₂, h₂)`
    /// with `t₂ - t₁ = dt_sites · a_t`.
    pub fn sharp_time_covariance(&self, dt_sites: i64, h1: &[f64], h2: &[f64]) -> Result<f64> {
        let s = &self.spec;
        let (b1, b2) = (fourier_x_profile(s, h1)?, fourier_x_profile(s, h2)?);
        let mut acc = 0.0;
        for n in 0..s.nt {
            let phase = (s.matsubara(n) * dt_sites as f64 * s.a_t()).cos();
            for j in 0..s.nx {
                acc += (b1[j].conj() * b2[j]).re * self.get(n, j) * phase;
            }
        }
        Ok(acc * s.dp() / s.beta)
    }

    /// CSV rows `n,j,multiplier` with signed frequency labels.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "n,j,multiplier")?;
        for n in 0..self.spec.nt {
            for j in 0..self.spec.nx {
                writeln!(
                    w,
                    "{},{},{:e}",
                    LatticeSpec::signed_index(n, self.spec.nt),
                    LatticeSpec::signed_index(j, self.spec.nx),
                    self.get(n, j)
                )?;
            }
        }
        Ok(())
    }
}

fn spectrum(plan: &FourierPlan, values: &[f64]) -> Result<Vec<Complex64>> {
    let mut v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    plan.forward(&mut v)?;
    Ok(v)
}

/// Lattice transform of `e^{-b|x|}/(2b)` sampled with spacing `a`.
pub fn transfer_symbol(a: f64, b: f64, p: f64) -> f64 {
    // a sinh(ab) / (2b (cosh(ab) - cos(ap))), written with e^{-ab} to stay finite.
    let q = (-a * b).exp();
    let num = a * (1.0 - q * q);
    let den = 2.0 * b * (1.0 - 2.0 * q * (a * p).cos() + q * q);
    num / den
}

pub fn quad_c(kernel: &CovKernel, f: &TestFunction, g: &TestFunction) -> Result<f64> {
    kernel.quad(f, g)
}

/// `ε(p_j)`, `b(ν_n)` and the Bose factor `ρ(p_j) = (e^{βε} - 1)^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalKernel {
    pub epsilon: Vec<f64>,
    pub b: Vec<f64>,
    pub rho: Vec<f64>,
}

impl ThermalKernel {
    pub fn new(spec: &LatticeSpec) -> Self {
        let m2 = spec.mass * spec.mass;
        let epsilon: Vec<f64> = (0..spec.nx).map(|j| (spec.momentum(j).powi(2) + m2).sqrt()).collect();
        let b = (0..spec.nt).map(|n| (spec.matsubara(n).powi(2) + m2).sqrt()).collect();
        let rho = epsilon.iter().map(|e| 1.0 / (spec.beta * e).exp_m1()).collect();
        ThermalKernel { epsilon, b, rho }
    }
}

/// `(e^{-|t|ε} + e^{-(β-|t|)ε}) / (2ε(1 - e^{-βε}))`.
pub fn thermal_closed_form(t: f64, eps: f64, beta: f64) -> f64 {
    let t = t.abs();
    ((-t * eps).exp() + (-(beta - t) * eps).exp()) / (2.0 * eps * -(-beta * eps).exp_m1())
}

fn check_matsubara_domain(t: f64, eps: f64, beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
    }
    if !(t.abs() <= beta) {
        return Err(Error::Domain(format!("|t| = {} exceeds beta = {beta}", t.abs())));
    }
    Ok(())
}

/// Truncated Matsubara sum `β^{-1} Σ_{|n|≤N} e^{iν_n t}/(ν_n² + ε²)` (±n paired)
/// next to its closed form.
pub fn matsubara_identity(t: f64, eps: f64, beta: f64, n_max: usize) -> Result<(f64, f64)> {
    check_matsubara_domain(t, eps, beta)?;
    if n_max < 1 {
        return Err(Error::Domain("N must be >= 1".into()));
    }
    let w = 2.0 * PI / beta;
    let e2 = eps * eps;
    // Summed from the small tail terms upwards.
    let mut tail = 0.0;
    for n in (1..=n_max).rev() {
        let nu = w * n as f64;
        tail += 2.0 * (nu * t).cos() / (nu * nu + e2);
    }
    let sum = (1.0 / e2 + tail) / beta;
    Ok((sum, thermal_closed_form(t, eps, beta)))
}

/// Full Matsubara series evaluated by subtracting the closed-form tail of
/// `Σ cos(nθ)/n²`; the remainder decays like `n^{-4}`.
pub fn matsubara_sum_accelerated(t: f64, eps: f64, beta: f64, n_max: usize) -> Result<f64> {
    check_matsubara_domain(t, eps, beta)?;
    let theta = (2.0 * PI * t / beta).rem_euclid(2.0 * PI);
    let kappa2 = (eps * beta / (2.0 * PI)).powi(2);
    let clausen2 = PI * PI / 6.0 - PI * theta / 2.0 + theta * theta / 4.0;
    let mut rest = 0.0;
    for n in (1..=n_max.max(1)).rev() {
        let n2 = (n * n) as f64;
        rest += (n as f64 * theta).cos() / (n2 * (n2 + kappa2));
    }
    let series = clausen2 - kappa2 * rest;
    Ok((1.0 / (eps * eps) + 2.0 * beta * beta / (4.0 * PI * PI) * series) / beta)
}

/// Sharp-time covariance `(h₁, K_β(t₂ - t₁) h₂)` with the closed-form thermal
/// kernel applied per spatial momentum.
pub fn c0_kernel(spec: &LatticeSpec, t1: f64, t2: f64, h1: &[f64], h2: &[f64]) -> Result<f64> {
    let (b1, b2) = (fourier_x_profile(spec, h1)?, fourier_x_profile(spec, h2)?);
    let beta = spec.beta;
    let dt = (t2 - t1).rem_euclid(beta);
    let mut acc = 0.0;
    for j in 0..spec.nx {
        let eps = (spec.momentum(j).powi(2) + spec.mass * spec.mass).sqrt();
        acc += (b1[j].conj() * b2[j]).re * thermal_closed_form(dt, eps, beta);
    }
    Ok(acc * spec.dp())
}

/// Same quantity as [`c0_kernel`] through the accelerated Matsubara series.
pub fn c0_kernel_series(spec: &LatticeSpec, t1: f64, t2: f64, h1: &[f64], h2: &[f64], n_max: usize) -> Result<f64> {
    let (b1, b2) = (fourier_x_profile(spec, h1)?, fourier_x_profile(spec, h2)?);
    let dt = (t2 - t1).rem_euclid(spec.beta);
    let mut acc = 0.0;
    for j in 0..spec.nx {
        let eps = (spec.momentum(j).powi(2) + spec.mass * spec.mass).sqrt();
        acc += (b1[j].conj() * b2[j]).re * matsubara_sum_accelerated(dt, eps, spec.beta, n_max)?;
    }
    Ok(acc * spec.dp())
}

/// Sharp-space covariance `(g₁, e^{-|x₁-x₂| b}/(2b) g₂)` over Matsubara modes.
pub fn cbeta_kernel(spec: &LatticeSpec, x1: f64, x2: f64, g1: &[f64], g2: &[f64]) -> Result<f64> {
    let (a1, a2) = (fourier_t_profile(spec, g1)?, fourier_t_profile(spec, g2)?);
    let dx = (x1 - x2).abs();
    let mut acc = 0.0;
    for n in 0..spec.nt {
        let b = (spec.matsubara(n).powi(2) + spec.mass * spec.mass).sqrt();
        acc += (a1[n].conj() * a2[n]).re * (-dx * b).exp() / (2.0 * b);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> LatticeSpec {
        LatticeSpec::new(1.0, 4.0, 8, 16, 1.0).unwrap()
    }

    #[test]
    fn multiplier_bounds_and_symmetry() {
        for symbol in [SpatialSymbol::Continuum, SpatialSymbol::FiniteDifference] {
            let s = spec();
            let k = CovKernel::with_options(s, symbol, None).unwrap();
            for n in 0..s.nt {
                for j in 0..s.nx {
                    let v = k.get(n, j);
                    assert!(v > 0.0 && v <= 1.0 / (s.mass * s.mass));
                    let (mn, mj) = ((s.nt - n) % s.nt, (s.nx - j) % s.nx);
                    assert_eq!(v, k.get(mn, mj));
                }
            }
        }
    }

    #[test]
    fn transfer_symbol_matches_image_sum() {
        let (a, b, p) = (0.1, 1.7, 2.3);
        let direct: f64 = (-4000i64..=4000)
            .map(|r| a * (-b * a * r.abs() as f64).exp() / (2.0 * b) * (p * a * r as f64).cos())
            .sum();
        assert_abs_diff_eq!(transfer_symbol(a, b, p), direct, epsilon = 1e-13);
    }

    #[test]
    fn transfer_site_covariance_is_sharp_space_kernel() {
        let s = LatticeSpec::new(1.0, 12.0, 6, 240, 1.0).unwrap();
        let k = CovKernel::with_options(s, SpatialSymbol::Transfer, Some(2)).unwrap();
        let mut h1 = vec![0.0; s.nx];
        let mut h2 = vec![0.0; s.nx];
        h1[100] = 1.0 / s.a_x();
        h2[107] = 1.0 / s.a_x();
        let lattice = k.sharp_time_covariance(0, &h1, &h2).unwrap();
        let dx = 7.0 * s.a_x();
        let mut expected = 0.0;
        for n in -2i64..=2 {
            let b = ((2.0 * PI * n as f64).powi(2) + 1.0).sqrt();
            expected += (-b * dx).exp() / (2.0 * b) / s.beta;
        }
        assert_abs_diff_eq!(lattice, expected, epsilon = 1e-10);
    }

    #[test]
    fn cutoff_masks_nyquist() {
        let s = spec();
        let k = CovKernel::with_options(s, SpatialSymbol::Continuum, Some(3)).unwrap();
        for j in 0..s.nx {
            assert_eq!(k.get(4, j), 0.0);
            assert!(k.get(3, j) > 0.0 && k.get(5, j) > 0.0);
        }
        assert!(CovKernel::with_options(s, SpatialSymbol::Continuum, Some(5)).is_err());
    }

    #[test]
    fn quad_single_mode() {
        let s = spec();
        let k = CovKernel::new(s);
        let zero = TestFunction::zeros(s);
        assert_eq!(k.quad(&zero, &zero).unwrap(), 0.0);
        // cos(ν₁ t)·cos(p₂ x) splits over the four modes (±1, ±2).
        let nu = s.matsubara(1);
        let p = s.momentum(2);
        let f = TestFunction::from_fn(s, |t, x| (nu * t).cos() * (p * x).cos()).unwrap();
        let norm2: f64 = f.values().iter().map(|v| v * v).sum::<f64>() * s.cell();
        let value = k.quad(&f, &f).unwrap() / norm2;
        assert_abs_diff_eq!(value, 1.0 / (nu * nu + p * p + 1.0), epsilon = 1e-14);
    }

    #[test]
    fn quad_positive_and_symmetric() {
        let s = spec();
        let k = CovKernel::new(s);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let f = TestFunction::new(s, (0..s.sites()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let g = TestFunction::new(s, (0..s.sites()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            assert!(k.quad(&f, &f).unwrap() > 0.0);
            assert_abs_diff_eq!(k.quad(&f, &g).unwrap(), k.quad(&g, &f).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn separable_matches_general() {
        let s = spec();
        let k = CovKernel::new(s);
        let g: Vec<f64> = (0..s.nt).map(|i| (i as f64 * 0.7).sin() + 0.2).collect();
        let h: Vec<f64> = (0..s.nx).map(|i| (-(s.space_coord(i)).powi(2)).exp()).collect();
        let f = TestFunction::tensor(s, &g, &h).unwrap();
        assert_abs_diff_eq!(
            k.quad(&f, &f).unwrap(),
            k.quad_separable(&g, &h, &g, &h).unwrap(),
            epsilon = 1e-13
        );
    }

    #[test]
    fn thermal_kernel_identity() {
        let s = LatticeSpec::new(0.7, 3.0, 8, 32, 1.3).unwrap();
        let th = ThermalKernel::new(&s);
        for (e, r) in th.epsilon.iter().zip(&th.rho) {
            assert!(*e >= s.mass && *r > 0.0);
            let q = (-s.beta * e).exp();
            assert_abs_diff_eq!((1.0 + q) / (1.0 - q), 1.0 + 2.0 * r, epsilon = 1e-14);
        }
        assert!(th.b.iter().all(|b| *b >= s.mass));
    }

    #[test]
    fn matsubara_closed_forms() {
        let (_, c) = matsubara_identity(0.0, 1.0, 1.0, 10).unwrap();
        assert_abs_diff_eq!(c, 1.0819767, epsilon = 1e-7);
        let (_, c) = matsubara_identity(0.5, 1.0, 1.0, 10).unwrap();
        assert_abs_diff_eq!(c, 2.0 * (-0.5f64).exp() / (2.0 * (1.0 - (-1.0f64).exp())), epsilon = 1e-15);
        let (sum, c) = matsubara_identity(0.0, 1.0, 1.0, 100_000).unwrap();
        assert!((sum - c).abs() < 3.0 / (2.0 * PI * PI * 1e5));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let t: f64 = rng.random_range(0.0..1.0);
            let a = matsubara_identity(t, 1.0, 1.0, 5).unwrap().1;
            let b = matsubara_identity(1.0 - t, 1.0, 1.0, 5).unwrap().1;
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        assert!(matsubara_identity(2.0, 1.0, 1.0, 5).is_err());
        assert!(matsubara_identity(0.1, 0.0, 1.0, 5).is_err());
        assert!(matsubara_identity(0.1, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn accelerated_sum_reaches_closed_form() {
        for &(t, eps, beta) in &[(0.0, 1.0, 1.0), (0.3, 2.0, 1.0), (0.9, 0.5, 2.0), (1.5, 1.0, 3.0)] {
            let acc = matsubara_sum_accelerated(t, eps, beta, 2000).unwrap();
            assert_abs_diff_eq!(acc, thermal_closed_form(t, eps, beta), epsilon = 1e-9);
        }
    }

    #[test]
    fn c0_examples() {
        let s = LatticeSpec::new(1.0, 4.0, 8, 16, 1.0).unwrap();
        let h = vec![1.0 / (2.0 * s.length).sqrt(); s.nx];
        assert_abs_diff_eq!(c0_kernel(&s, 0.2, 0.2, &h, &h).unwrap(), 1.0819767, epsilon = 1e-7);
        let big = LatticeSpec::new(50.0, 4.0, 8, 16, 1.0).unwrap();
        assert_abs_diff_eq!(c0_kernel(&big, 0.0, 0.0, &h, &h).unwrap(), 0.5, epsilon = 1e-10);
        // Equal-time value carries the Bose factor.
        let g: Vec<f64> = (0..s.nx).map(|i| (-(s.space_coord(i)).powi(2)).exp()).collect();
        let th = ThermalKernel::new(&s);
        let gh = fourier_x_profile(&s, &g).unwrap();
        let via_rho: f64 = (0..s.nx)
            .map(|j| gh[j].norm_sqr() * (1.0 + 2.0 * th.rho[j]) / (2.0 * th.epsilon[j]))
            .sum::<f64>()
            * s.dp();
        assert_abs_diff_eq!(c0_kernel(&s, 0.0, 0.0, &g, &g).unwrap(), via_rho, epsilon = 1e-12);
    }

    #[test]
    fn cbeta_examples() {
        let s = LatticeSpec::new(1.0, 4.0, 8, 16, 1.0).unwrap();
        let g = vec![1.0 / s.beta.sqrt(); s.nt];
        assert_abs_diff_eq!(cbeta_kernel(&s, 0.3, 0.3, &g, &g).unwrap(), 0.5, epsilon = 1e-14);
        let ratio = cbeta_kernel(&s, 0.0, 3.0, &g, &g).unwrap() / cbeta_kernel(&s, 0.0, 0.0, &g, &g).unwrap();
        assert_abs_diff_eq!(ratio, (-3.0f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let s = LatticeSpec::new(1.0, 1.0, 4, 4, 1.0).unwrap();
        let mut buf = Vec::new();
        CovKernel::new(s).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,j,multiplier\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
