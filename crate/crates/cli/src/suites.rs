//! Suite orchestration. Suites are independent and run on the rayon pool;
//! results come back in configuration order.

use std::num::NonZeroUsize;

use gauss_quad::GaussHermite;
use num_complex::Complex64;
use rayon::prelude::*;

use pphi2_core::gaussian::{generating_functional_free, moment_free};
use pphi2_core::{FourierPlan, LatticeData, SampleStream, TestFunction};
use pphi2_fock::ground::{low_spectrum, GroundState, SpectrumLine};
use pphi2_fock::operators::default_nodes;
use pphi2_fock::{build_free, build_vc, ground_state, hamiltonian, FockBasis, RealOperator};
use pphi2_schwinger::battery::{self, CriterionOutcome, CRITERIA, RUNTIME_CHECK};
use pphi2_schwinger::correlations::sharp_time_schwinger;
use pphi2_schwinger::Check;

use crate::config::{LatticeConfig, RunConfig, Suite};
use crate::report::{SuiteReport, Timing};
use crate::tables::SchwingerRow;

#[derive(Debug, Clone, PartialEq)]
pub enum Table {
    Schwinger(Vec<SchwingerRow>),
    Spectrum(Vec<SpectrumLine>),
}

impl Table {
    pub fn file_name(&self) -> &'static str {
        match self {
            Table::Schwinger(_) => "schwinger.csv",
            Table::Spectrum(_) => "spectrum.csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteRun {
    pub reports: Vec<SuiteReport>,
    pub tables: Vec<Table>,
}

/// `Full` expands to its criteria; repeated suites run once.
pub fn expand(suites: &[Suite]) -> Vec<Suite> {
    let mut out: Vec<Suite> = Vec::new();
    for s in suites {
        let items = match s {
            Suite::Full => CRITERIA.iter().map(|c| Suite::Criterion(c.0)).collect(),
            other => vec![other.clone()],
        };
        for s in items {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    out
}

pub fn run_suites(cfg: &RunConfig) -> SuiteRun {
    let results: Vec<(SuiteReport, Option<Table>)> = expand(&cfg.suites).par_iter().map(|s| run_one(s, cfg)).collect();
    let mut run = SuiteRun {
        reports: Vec::new(),
        tables: Vec::new(),
    };
    for (r, t) in results {
        run.reports.push(r);
        run.tables.extend(t);
    }
    run
}

fn run_one(suite: &Suite, cfg: &RunConfig) -> (SuiteReport, Option<Table>) {
    let name = suite.to_string();
    log::info!("suite {name}");
    match suite {
        Suite::FreeIdentities => (SuiteReport::from_checks(name, free_identities(&cfg.lattice)), None),
        Suite::Criterion(id) => (criterion_report(battery::run_criterion(*id, &cfg.battery())), None),
        Suite::Schwinger => {
            let (checks, rows) = match schwinger(cfg) {
                Ok((c, r)) => (Ok(c), r),
                Err(e) => (Err(e), Vec::new()),
            };
            (SuiteReport::from_checks(name, checks), Some(Table::Schwinger(rows)))
        }
        Suite::Spectrum => {
            let (checks, lines) = match spectrum(cfg) {
                Ok((c, l)) => (Ok(c), l),
                Err(e) => (Err(e), Vec::new()),
            };
            (SuiteReport::from_checks(name, checks), Some(Table::Spectrum(lines)))
        }
        Suite::Full => unreachable!("expanded before running"),
    }
}

fn criterion_report(o: CriterionOutcome) -> SuiteReport {
    let (runtime, tests): (Vec<Check>, Vec<Check>) = o.checks.into_iter().partition(|c| c.name == RUNTIME_CHECK);
    SuiteReport {
        name: Suite::Criterion(o.id).to_string(),
        pass: o.pass,
        error: o.error,
        tests,
        timing: runtime.first().map(|c| Timing {
            seconds: c.lhs,
            budget_seconds: c.rhs,
            pass: c.pass,
        }),
    }
}

fn prefixed(group: &str, checks: Vec<Check>) -> impl Iterator<Item = Check> + '_ {
    checks.into_iter().map(move |mut c| {
        c.name = format!("{group}: {}", c.name);
        c
    })
}

/// `E[g(X)]` for `X ~ N(0, c)` by Gauss–Hermite quadrature, used as an
/// oracle independent of the closed forms in the library.
pub fn gaussian_expectation(c: f64, nodes: usize, g: impl Fn(f64) -> f64) -> f64 {
    let rule = GaussHermite::new(NonZeroUsize::new(nodes).expect("at least one node"));
    let s = (2.0 * c).sqrt();
    rule.integrate(|y| g(s * y)) / std::f64::consts::PI.sqrt()
}

pub fn free_identities(lattice: &LatticeConfig) -> std::result::Result<Vec<Check>, String> {
    let mut checks: Vec<Check> = prefixed("matsubara", battery::matsubara().map_err(|e| e.to_string())?).collect();
    checks.extend(prefixed("fourier", fourier_checks(lattice).map_err(|e| e.to_string())?));
    checks.extend(prefixed("moments", moment_checks(lattice).map_err(|e| e.to_string())?));
    Ok(checks)
}

fn fourier_checks(lattice: &LatticeConfig) -> crate::error::Result<Vec<Check>> {
    let kernel = lattice.kernel()?;
    let spec = *kernel.spec();
    let phi = SampleStream::new(&kernel, 1).sample(0);
    let plan = FourierPlan::new(spec);
    let mut buf: Vec<Complex64> = phi.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan.forward(&mut buf)?;
    let spectral: f64 = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() * spec.dp();
    let direct: f64 = phi.values().iter().map(|v| v * v).sum::<f64>() * spec.cell();
    plan.inverse(&mut buf)?;
    let scale = phi.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let round_trip = buf.iter().zip(phi.values()).map(|(z, v)| (z - v).norm()).fold(0.0, f64::max);

    // A unit mass on one cell pairs with itself to the site variance.
    let mut delta = vec![0.0; spec.sites()];
    delta[0] = 1.0 / spec.cell();
    let delta = TestFunction::new(spec, delta)?;
    Ok(vec![
        Check::absolute("inverse(forward(phi)) = phi, max deviation", round_trip, 0.0, 1e-12 * scale.max(1.0)),
        Check::relative("Parseval", spectral, direct, 1e-12),
        Check::relative("C(delta, delta) = site variance", kernel.quad(&delta, &delta)?, kernel.site_variance(), 1e-10),
    ])
}

fn moment_checks(lattice: &LatticeConfig) -> crate::error::Result<Vec<Check>> {
    let kernel = lattice.kernel()?;
    let spec = *kernel.spec();
    let w = 2.0 * std::f64::consts::PI / spec.beta;
    let f = TestFunction::from_fn(spec, |t, x| (1.0 + 0.3 * (w * t).cos()) * (-x * x).exp())?;
    let c = kernel.quad(&f, &f)?;
    let mut checks = Vec::new();
    for p in 1..=8u32 {
        let oracle = gaussian_expectation(c, 30, |x| x.powi(p as i32));
        let scale = gaussian_expectation(c, 30, |x| x.abs().powi(p as i32));
        checks.push(Check::absolute(format!("E[phi(f)^{p}] against Gauss-Hermite"), moment_free(&kernel, &f, p)?, oracle, 1e-12 * scale.max(1.0)));
    }
    for s in [0.5, 1.0, 2.0] {
        let g = f.scaled(s);
        let oracle = gaussian_expectation(s * s * c, 60, f64::cos);
        checks.push(Check::absolute(format!("E[exp(i phi({s} f))] against Gauss-Hermite"), generating_functional_free(&kernel, &g)?, oracle, 1e-12));
    }
    Ok(checks)
}

/// Gaussian spatial profile `exp(-x²)` used by the sharp-time tables.
pub fn gaussian_profile(lattice: &LatticeConfig) -> crate::error::Result<Vec<f64>> {
    let spec = lattice.spec()?;
    Ok((0..spec.nx).map(|i| (-spec.space_coord(i).powi(2)).exp()).collect())
}

fn schwinger(cfg: &RunConfig) -> std::result::Result<(Vec<Check>, Vec<SchwingerRow>), String> {
    let inner = || -> crate::error::Result<_> {
        let kernel = cfg.lattice.kernel()?;
        let inter = cfg.interaction.spec(&kernel)?;
        let h = gaussian_profile(&cfg.lattice)?;
        let table = sharp_time_schwinger(&kernel, &inter, &h, &h, 0, cfg.mc.samples, cfg.seed)?;
        let rows = table
            .rows
            .iter()
            .map(|r| SchwingerRow {
                t: r.t,
                value: r.value.value,
                stderr: r.value.stderr,
            })
            .collect();
        Ok((table.checks, rows))
    };
    inner().map_err(|e| e.to_string())
}

/// The circle Hamiltonian of the configured model with its ground state
/// and quadrature node count.
pub struct FockModel {
    pub basis: FockBasis,
    pub h: RealOperator,
    pub ground: GroundState,
    pub nodes: usize,
}

pub fn fock_model(cfg: &RunConfig) -> crate::error::Result<FockModel> {
    let basis = FockBasis::new(cfg.fock.basis_spec(cfg.lattice.beta, cfg.lattice.mass)?)?;
    let poly = cfg.interaction.wick()?;
    let nodes = default_nodes(poly.degree().max(2), cfg.fock.modes);
    let h = hamiltonian(&build_free(&basis), &build_vc(&basis, &poly, nodes)?)?;
    let ground = ground_state(&h)?;
    Ok(FockModel { basis, h, ground, nodes })
}

pub fn spectrum_checks(cfg: &RunConfig, m: &FockModel, lines: &[SpectrumLine]) -> Vec<Check> {
    let want = cfg.fock.levels.min(m.basis.dim());
    let gs = &m.ground;
    let mut checks = vec![Check::absolute("rows = requested levels", lines.len() as f64, want as f64, 0.0)];
    if let Some(first) = lines.first() {
        checks.push(Check::absolute("lowest level = ground-state energy", first.energy, gs.energy, 1e-8 * gs.energy.abs().max(1.0)));
        checks.push(Check::absolute("ground state has zero momentum", first.momentum, 0.0, 1e-12));
    }
    checks.push(Check::at_least("spectral gap", gs.gap, 0.0, 0.0));
    checks
}

fn spectrum(cfg: &RunConfig) -> std::result::Result<(Vec<Check>, Vec<SpectrumLine>), String> {
    let inner = || -> crate::error::Result<_> {
        let m = fock_model(cfg)?;
        let lines = low_spectrum(&m.h, &m.basis, cfg.fock.levels, Some(m.nodes))?;
        Ok((spectrum_checks(cfg, &m, &lines), lines))
    };
    inner().map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_hermite_oracle_reproduces_double_factorials() {
        let c = 0.7;
        assert!((gaussian_expectation(c, 20, |x| x.powi(4)) - 3.0 * c * c).abs() < 1e-13);
        assert!((gaussian_expectation(c, 20, |x| x.powi(6)) - 15.0 * c.powi(3)).abs() < 1e-13);
        assert!((gaussian_expectation(c, 60, f64::cos) - (-0.5 * c).exp()).abs() < 1e-14);
    }

    #[test]
    fn full_expands_and_dedups() {
        let s = expand(&[Suite::Criterion(3), Suite::Full, Suite::FreeIdentities, Suite::FreeIdentities]);
        assert_eq!(s.len(), 12);
        assert_eq!(s[0], Suite::Criterion(3));
        assert_eq!(s[11], Suite::FreeIdentities);
    }

    #[test]
    fn free_identities_pass_on_defaults() {
        let checks = free_identities(&LatticeConfig::default()).unwrap();
        let bad: Vec<_> = checks.iter().filter(|c| !c.pass).collect();
        assert!(bad.is_empty(), "{bad:?}");
    }
}
