//! The identity
//! `∫ e^{iφ(f)} G_{[-l,l]} dφ_C = e^{-2lE_C} (e^{-(l-a)H^ren}Ω°, W_{[-a,a]}(f) e^{-(l-a)H^ren}Ω°)`
//! for `f` supported in `|x| ≤ a`, its `l → ∞` limit, and the moment formula.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use pphi2_core::gaussian::{generating_functional_free, moment_free};
use pphi2_core::interaction::reweight;
use pphi2_core::{Estimate, InteractionSpec, LatticeData, LatticeSpec, SampleStream, TestFunction};
use pphi2_fock::heatprop::{impulse_moments, Drive};
use pphi2_fock::FockBasisSpec;

use crate::error::{Result, SchwingerError};
use crate::report::Check;
use crate::setup::{check_matched, CrossConfig, FockSide, Generator};

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeMode {
    /// Closed Gaussian forms; only valid for `λ = 0`.
    Exact,
    MonteCarlo,
}

/// Fock-side values of the identity at finite `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockValue {
    /// `e^{-2lE} (ψ_l, W ψ_l)`, `ψ_l = e^{-(l-a)H^ren}Ω°`.
    pub unnormalized_re: f64,
    pub unnormalized_im: f64,
    /// `e^{-2lE} ‖e^{-l H^ren} Ω°‖²`, the partition function `∫ G dφ_C`.
    pub z: f64,
    /// Ratio of the two: the `μ_l` generating functional.
    pub normalized_re: f64,
    pub normalized_im: f64,
}

/// Fock side of the identity for a drive supported in `[-a, a)`.
pub fn fock_generating(side: &FockSide, drive: &Drive, a: f64, l: f64) -> Result<FockValue> {
    if let Some((lo, hi)) = drive.support() {
        if lo < -a || hi >= a {
            return Err(SchwingerError::Config(format!("drive support [{lo}, {hi}] leaves [-{a}, {a})")));
        }
    }
    let psi = side.relax(&side.free_vacuum(), l - a)?;
    let p = side.problem(drive.clone())?;
    // (ψ, W ψ) = (U ψ, ψ) with W = U(a, -a)*.
    let u_psi = p.apply_u(-a, a, &psi)?.value;
    let num: C = u_psi.iter().zip(&psi).map(|(x, y)| x.conj() * y).sum();
    let relaxed = side.relax(&psi, 2.0 * a)?;
    let norm: f64 = psi.iter().zip(&relaxed).map(|(x, y)| (x.conj() * y).re).sum();
    let scale = (-2.0 * l * side.energy).exp();
    let normalized = num / norm;
    Ok(FockValue {
        unnormalized_re: scale * num.re,
        unnormalized_im: scale * num.im,
        z: scale * norm,
        normalized_re: normalized.re,
        normalized_im: normalized.im,
    })
}

/// `(Ω_C, W(f) Ω_C)`, the `l → ∞` limit.
pub fn fock_limit(side: &FockSide, drive: &Drive) -> Result<C> {
    let Some((lo, hi)) = drive.support() else {
        return Ok(C::new(1.0, 0.0));
    };
    let p = side.problem(drive.clone())?;
    let u = p.apply_u(lo, hi + 1e-9 * (1.0 + hi.abs()), &side.omega)?.value;
    Ok(u.iter().zip(&side.omega).map(|(x, y)| x.conj() * y).sum())
}

/// `E_{μ_l}[φ(f)^n]` from the ordered expansion between `ψ_l` vectors;
/// `l = ∞` uses `Ω_C`.
pub fn fock_moment(side: &FockSide, drive: &Drive, a: f64, l: Option<f64>, n: usize) -> Result<f64> {
    if n > 3 {
        return Err(SchwingerError::Unsupported(format!("moment order {n} > 3")));
    }
    let psi = match l {
        Some(l) => side.relax(&side.free_vacuum(), l - a)?,
        None => side.omega.clone(),
    };
    let t = impulse_moments(side.spectral(), drive, &psi, &psi, -a, a, n, C::new(1.0, 0.0))?;
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    Ok((t[n] / t[0]).re * fact)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub name: String,
    pub lattice: Estimate,
    pub fock: FockValue,
    /// `|fock(N_max + 2) - fock(N_max)|` on the compared quantity.
    pub truncation_delta: f64,
    /// Continuum generator minus lattice transfer generator, when computed.
    pub discretization_delta: Option<f64>,
    pub pull: f64,
    pub check: Check,
    pub lattice_spec: LatticeSpec,
    pub fock_spec: FockBasisSpec,
    pub nodes: usize,
    pub a: f64,
    pub l: f64,
}

fn lattice_unnormalized(cfg: &CrossConfig, f: &TestFunction, l: f64, mode: LatticeMode) -> Result<Estimate> {
    let kernel = cfg.kernel()?;
    match mode {
        LatticeMode::Exact => {
            if cfg.lambda != 0.0 {
                return Err(SchwingerError::Unsupported("exact lattice values need λ = 0".into()));
            }
            Ok(Estimate::exact(generating_functional_free(&kernel, f)?))
        }
        LatticeMode::MonteCarlo => {
            let inter = InteractionSpec::new(&kernel, cfg.coeffs(), l)?;
            let stream = SampleStream::new(&kernel, cfg.seed);
            let ens = reweight(&stream, &inter, cfg.samples, |phi| vec![f.pair(phi).unwrap_or(f64::NAN)])?;
            Ok(ens.unnormalized_mean(|r| r[0].cos())?)
        }
    }
}

/// Both sides of the identity for `f` supported in `|x| ≤ a`, window `l`.
/// Exact mode requires agreement to `1e-6`; Monte Carlo mode to 4 pulls,
/// the error bar being the sampling error and the truncation sweep in
/// quadrature.
pub fn generating_functional_check(cfg: &CrossConfig, name: &str, f: &TestFunction, a: f64, l: f64, mode: LatticeMode) -> Result<CrosscheckReport> {
    cfg.check_cutoffs(a, l)?;
    let kernel = cfg.kernel()?;
    let spec = cfg.basis_spec()?;
    check_matched(&kernel, &spec)?;
    let lattice = *kernel.spec();
    if f.spec() != &lattice {
        return Err(SchwingerError::TruncationMismatch("test function lives on another lattice".into()));
    }

    let side = FockSide::new(cfg, Generator::Continuum)?;
    let drive = side.site_drive(&lattice, f)?;
    let fock = fock_generating(&side, &drive, a, l)?;
    let up = FockSide::new(&cfg.with_n_max(cfg.n_max + 2), Generator::Continuum)?;
    let fock_up = fock_generating(&up, &up.site_drive(&lattice, f)?, a, l)?;
    let truncation_delta = (fock_up.unnormalized_re - fock.unnormalized_re).abs();
    let discretization_delta = if cfg.lambda != 0.0 && side.dim() <= 1500 {
        let lat = FockSide::new(cfg, Generator::LatticeTransfer { a: lattice.a_x() })?;
        let v = fock_generating(&lat, &lat.site_drive(&lattice, f)?, a, l)?;
        Some(fock.unnormalized_re - v.unnormalized_re)
    } else {
        None
    };

    let est = lattice_unnormalized(cfg, f, l, mode)?;
    let check = match mode {
        LatticeMode::Exact => Check::absolute(name, est.value, fock.unnormalized_re, 1e-6),
        LatticeMode::MonteCarlo => {
            let sigma = est.stderr.hypot(truncation_delta);
            Check::pulls(name, est.value, sigma, fock.unnormalized_re, 4.0)
        }
    };
    Ok(CrosscheckReport {
        name: name.to_string(),
        lattice: est,
        fock,
        truncation_delta,
        discretization_delta,
        pull: if est.stderr > 0.0 { est.pull(fock.unnormalized_re) } else { 0.0 },
        check,
        lattice_spec: lattice,
        fock_spec: spec,
        nodes: cfg.nt(),
        a,
        l,
    })
}

/// The `f = 0` case of the identity: both sides are the partition function
/// `∫ G_{[-l,l]} dφ_C`.
pub fn partition_check(cfg: &CrossConfig, l: f64) -> Result<Check> {
    cfg.check_cutoffs(0.0, l)?;
    let kernel = cfg.kernel()?;
    check_matched(&kernel, &cfg.basis_spec()?)?;
    let inter = InteractionSpec::new(&kernel, cfg.coeffs(), l)?;
    let stream = SampleStream::new(&kernel, cfg.seed);
    let z = reweight(&stream, &inter, cfg.samples, |_| Vec::new())?.z_ratio();
    let fock_z = |c: &CrossConfig| -> Result<f64> {
        let side = FockSide::new(c, Generator::Continuum)?;
        Ok(fock_generating(&side, &Drive::zero(), 0.0, l)?.z)
    };
    let (here, up) = (fock_z(cfg)?, fock_z(&cfg.with_n_max(cfg.n_max + 2))?);
    Ok(Check::pulls(format!("f = 0: Z_l at l = {l}"), z.value, z.stderr.hypot(up - here), here, 4.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub l: f64,
    pub lattice: Estimate,
    pub fock: f64,
    pub distance_to_limit: f64,
    pub pull: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    pub limit_re: f64,
    pub limit_im: f64,
    pub gap: f64,
    pub checks: Vec<Check>,
}

/// `E_{μ_l}[e^{iφ(f)}]` over increasing `l` against the Fock values at the
/// same `l` and the limit `(Ω_C, W(f)Ω_C)`.
pub fn thermo_limit_scan(cfg: &CrossConfig, f: &TestFunction, a: f64, l_list: &[f64]) -> Result<ScanReport> {
    if l_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SchwingerError::Config("l values must increase".into()));
    }
    let kernel = cfg.kernel()?;
    check_matched(&kernel, &cfg.basis_spec()?)?;
    let side = FockSide::new(cfg, Generator::Continuum)?;
    let drive = side.site_drive(kernel.spec(), f)?;
    let limit = fock_limit(&side, &drive)?;
    let stream = SampleStream::new(&kernel, cfg.seed);
    let mut rows = Vec::new();
    let mut checks = vec![Check::at_least("scan: |limit| <= 1", 1.0, limit.norm(), 1e-12)];
    for &l in l_list {
        cfg.check_cutoffs(a, l)?;
        let fock = fock_generating(&side, &drive, a, l)?.normalized_re;
        let lattice = if cfg.lambda == 0.0 {
            Estimate::exact(generating_functional_free(&kernel, f)?)
        } else {
            let inter = InteractionSpec::new(&kernel, cfg.coeffs(), l)?;
            reweight(&stream, &inter, cfg.samples, |phi| vec![f.pair(phi).unwrap_or(f64::NAN)])?.mean(|r| r[0].cos())
        };
        let pull = if lattice.stderr > 0.0 { lattice.pull(fock) } else { 0.0 };
        if lattice.stderr > 0.0 {
            checks.push(Check::pulls(format!("scan: l = {l} lattice vs Fock"), lattice.value, lattice.stderr, fock, 4.0));
        } else {
            checks.push(Check::absolute(format!("scan: l = {l} lattice vs Fock"), lattice.value, fock, 1e-6));
        }
        rows.push(ScanRow {
            l,
            lattice,
            fock,
            distance_to_limit: (fock - limit.re).abs(),
            pull,
        });
    }
    // Past l - a = 2/gap the approach to the limit is monotone.
    let settled: Vec<&ScanRow> = rows.iter().filter(|r| r.l - a >= 2.0 / side.gap).collect();
    for w in settled.windows(2) {
        checks.push(Check::at_least(
            format!("scan: monotone approach l = {} -> {}", w[0].l, w[1].l),
            w[0].distance_to_limit,
            w[1].distance_to_limit,
            1e-12,
        ));
    }
    Ok(ScanReport {
        rows,
        limit_re: limit.re,
        limit_im: limit.im,
        gap: side.gap,
        checks,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n: usize,
    pub lattice: Estimate,
    pub fock: f64,
    pub fock_limit: f64,
    pub check: Check,
}

/// `E_{μ_l}[φ(f)^n]` on the lattice against the ordered Fock expansion at
/// the same `l`. With `λ = 0` the lattice side is the exact Gaussian moment.
pub fn moment_formula_check(cfg: &CrossConfig, f: &TestFunction, a: f64, l: f64, n: usize) -> Result<MomentReport> {
    if n == 0 || n > 3 {
        return Err(SchwingerError::Unsupported(format!("moment order {n} outside 1..=3")));
    }
    cfg.check_cutoffs(a, l)?;
    let kernel = cfg.kernel()?;
    check_matched(&kernel, &cfg.basis_spec()?)?;
    let side = FockSide::new(cfg, Generator::Continuum)?;
    let drive = side.site_drive(kernel.spec(), f)?;
    let fock = fock_moment(&side, &drive, a, Some(l), n)?;
    let fock_limit = fock_moment(&side, &drive, a, None, n)?;
    let (lattice, check) = if cfg.lambda == 0.0 {
        let exact = moment_free(&kernel, f, n as u32)?;
        (Estimate::exact(exact), Check::absolute(format!("moment n = {n} (free, exact)"), exact, fock, 1e-6))
    } else {
        let inter = InteractionSpec::new(&kernel, cfg.coeffs(), l)?;
        let stream = SampleStream::new(&kernel, cfg.seed);
        let ens = reweight(&stream, &inter, cfg.samples, |phi| vec![f.pair(phi).unwrap_or(f64::NAN)])?;
        let est = ens.mean(|r| r[0].powi(n as i32));
        (est, Check::pulls(format!("moment n = {n} (lambda = {})", cfg.lambda), est.value, est.stderr, fock, 4.0))
    };
    Ok(MomentReport {
        n,
        lattice,
        fock,
        fock_limit,
        check,
    })
}

/// `g(t) ⊗ h(x)` with a band-limited time profile and a compact spatial
/// bump of radius `a` centred at `x0`.
pub fn band_limited_bump(lattice: &LatticeSpec, amplitude: f64, time_weights: &[(i64, f64, f64)], x0: f64, a: f64) -> Result<TestFunction> {
    let w = 2.0 * std::f64::consts::PI / lattice.beta;
    let g: Vec<f64> = (0..lattice.nt)
        .map(|k| {
            let t = lattice.time_coord(k);
            time_weights.iter().map(|&(n, c, s)| c * (w * n as f64 * t).cos() + s * (w * n as f64 * t).sin()).sum::<f64>()
        })
        .collect();
    let h: Vec<f64> = (0..lattice.nx)
        .map(|i| {
            let u = (lattice.space_coord(i) - x0) / a;
            if u.abs() < 1.0 {
                amplitude * (1.0 - u * u).powi(2)
            } else {
                0.0
            }
        })
        .collect();
    Ok(TestFunction::tensor(*lattice, &g, &h)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CrossConfig {
        CrossConfig {
            // Periodic images sit at distance 2L - 2a; e^{-16} is below the tolerance.
            length: 9.0,
            nx: 360,
            modes: 1,
            n_max: 6,
            lambda: 0.0,
            samples: 4000,
            ..Default::default()
        }
    }

    #[test]
    fn free_identity_is_exact() {
        let cfg = small();
        let lat = cfg.lattice().unwrap();
        let f = band_limited_bump(&lat, 0.8, &[(0, 1.0, 0.0), (1, 0.4, 0.3)], 0.0, 1.0).unwrap();
        let rep = generating_functional_check(&cfg, "free", &f, 1.0, 2.0, LatticeMode::Exact).unwrap();
        assert!(rep.check.pass, "{rep:?}");
        assert!((rep.fock.z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn free_moments_are_exact() {
        let cfg = small();
        let lat = cfg.lattice().unwrap();
        let f = band_limited_bump(&lat, 0.8, &[(0, 1.0, 0.0), (1, 0.4, 0.3)], 0.0, 1.0).unwrap();
        let rep = moment_formula_check(&cfg, &f, 1.0, 2.0, 2).unwrap();
        assert!(rep.check.pass, "{rep:?}");
        assert!((rep.fock - rep.fock_limit).abs() < 1e-12);
        assert!(moment_formula_check(&cfg, &f, 1.0, 2.0, 4).is_err());
    }

    #[test]
    fn support_outside_interval_is_refused() {
        let cfg = small();
        let lat = cfg.lattice().unwrap();
        let f = band_limited_bump(&lat, 0.8, &[(0, 1.0, 0.0)], 0.5, 1.0).unwrap();
        assert!(generating_functional_check(&cfg, "shifted", &f, 1.0, 2.0, LatticeMode::Exact).is_err());
    }
}
