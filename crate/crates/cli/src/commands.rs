//! Subcommand bodies. Each returns the JSON summary printed on stdout.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use serde_json::{json, Value};

use pphi2_core::dump::write_fields;
use pphi2_core::interaction::{metropolis, reweight};
use pphi2_core::stats::mean_stderr;
use pphi2_core::{Estimate, Field, LatticeData, Method, SampleStream, TestFunction};
use pphi2_fock::ground::low_spectrum;
use pphi2_fock::heatprop::{Drive, Profile, PropagatorProblem};
use pphi2_fock::{field_operator, renormalized};

use crate::config::{LatticeConfig, RunConfig};
use crate::error::{CliError, Result};
use crate::report::Report;
use crate::suites::{fock_model, run_suites, spectrum_checks, Table};
use crate::tables;

type C = Complex64;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| CliError::io(path, e))
}

/// `--out x.json` names the report; any other `--out` is a directory.
pub fn report_paths(out: Option<&Path>) -> (PathBuf, PathBuf) {
    match out {
        Some(p) if p.extension().is_some_and(|e| e == "json") => {
            let dir = p.parent().filter(|d| !d.as_os_str().is_empty()).map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            (dir, p.to_path_buf())
        }
        Some(p) => (p.to_path_buf(), p.join("report.json")),
        None => (PathBuf::from("."), PathBuf::from("report.json")),
    }
}

/// Runs the configured suites and writes `report.json`, the config echo
/// `config.json` and the CSV tables. Failing checks become
/// [`CliError::Failed`] after every artifact is on disk.
pub fn run(cfg: &RunConfig, out: Option<&Path>) -> Result<Report> {
    cfg.validate()?;
    let (dir, report_path) = report_paths(out);
    ensure_dir(&dir)?;
    write_json(&dir.join("config.json"), cfg)?;
    let run = run_suites(cfg);
    let mut names = Vec::new();
    for t in &run.tables {
        let path = dir.join(t.file_name());
        match t {
            Table::Schwinger(rows) => tables::write_schwinger(&path, rows)?,
            Table::Spectrum(lines) => tables::write_spectrum(&path, lines)?,
        }
        names.push(t.file_name().to_string());
    }
    let report = Report::new(cfg.clone(), run.reports, names);
    std::fs::write(&report_path, report.to_json()?).map_err(|e| CliError::io(&report_path, e))?;
    Ok(report)
}

/// `(1 + 0.3 cos(2πt/β)) e^{-x²}`, the probe used by `sample` and
/// `interact`.
pub fn probe(lattice: &LatticeConfig) -> Result<TestFunction> {
    let spec = lattice.spec()?;
    let w = 2.0 * std::f64::consts::PI / spec.beta;
    Ok(TestFunction::from_fn(spec, |t, x| (1.0 + 0.3 * (w * t).cos()) * (-x * x).exp())?)
}

fn site_mean_square(phi: &Field) -> f64 {
    let v = phi.values();
    v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64
}

fn estimate(values: &[f64], seed: u64) -> Estimate {
    let (value, stderr) = mean_stderr(values);
    Estimate {
        value,
        stderr,
        n: values.len(),
        seed,
    }
}

fn check_samples(n: usize) -> Result<()> {
    if n < 2 {
        return Err(CliError::Config(format!("need at least 2 samples, got {n}")));
    }
    Ok(())
}

fn dump_fields(path: &Path, stream: &SampleStream, spec: &pphi2_core::LatticeSpec, count: usize) -> Result<()> {
    let fields: Vec<Field> = (0..count as u64).map(|i| stream.sample(i)).collect();
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    write_fields(BufWriter::new(file), spec, &fields)?;
    Ok(())
}

pub struct SampleArgs {
    pub lattice: LatticeConfig,
    pub samples: usize,
    pub seed: u64,
    pub dump: usize,
    pub kernel_dump: bool,
}

/// Free-field sampling with exact references.
pub fn sample(a: &SampleArgs, dir: &Path) -> Result<Value> {
    check_samples(a.samples)?;
    let kernel = a.lattice.kernel()?;
    let spec = *kernel.spec();
    let f = probe(&a.lattice)?;
    let stream = SampleStream::new(&kernel, a.seed);
    let rows = stream.map(0..a.samples as u64, |_, phi| (site_mean_square(phi), f.pair(phi).map_or(f64::NAN, |v| v * v)));
    let (sq, pf): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let mut artifacts = Vec::new();
    if a.dump > 0 || a.kernel_dump {
        ensure_dir(dir)?;
    }
    if a.dump > 0 {
        dump_fields(&dir.join("fields.bin"), &stream, &spec, a.dump)?;
        artifacts.push("fields.bin");
    }
    if a.kernel_dump {
        tables::write_kernel(&dir.join("kernel.csv"), &kernel)?;
        artifacts.push("kernel.csv");
    }
    Ok(json!({
        "lattice": a.lattice,
        "seed": a.seed,
        "samples": a.samples,
        "estimates": {
            "site_variance": { "estimate": estimate(&sq, a.seed), "exact": kernel.site_variance() },
            "phi_f_squared": { "estimate": estimate(&pf, a.seed), "exact": kernel.quad(&f, &f)? },
        },
        "artifacts": artifacts,
    }))
}

pub struct InteractArgs {
    pub config: RunConfig,
    pub dump: usize,
}

/// Estimates under the interacting measure with the configured sampler.
pub fn interact(a: &InteractArgs, dir: &Path) -> Result<Value> {
    let cfg = &a.config;
    cfg.validate()?;
    if a.dump > 0 && cfg.mc.method != Method::Reweight {
        return Err(CliError::Config("field dumps record the Gaussian proposals of --method reweight".into()));
    }
    let kernel = cfg.lattice.kernel()?;
    let spec = *kernel.spec();
    let inter = cfg.interaction.spec(&kernel)?;
    let f = probe(&cfg.lattice)?;
    let obs = |phi: &Field| vec![f.pair(phi).unwrap_or(f64::NAN), site_mean_square(phi)];
    let stream = SampleStream::new(&kernel, cfg.seed);
    let ens = match cfg.mc.method {
        Method::Reweight => reweight(&stream, &inter, cfg.mc.samples, obs)?,
        Method::Metropolis => metropolis(&kernel, &inter, &cfg.mc.metropolis, cfg.seed, cfg.mc.samples, obs)?,
    };
    let mut artifacts = Vec::new();
    if a.dump > 0 {
        ensure_dir(dir)?;
        dump_fields(&dir.join("fields.bin"), &stream, &spec, a.dump)?;
        tables::write_weights(&dir.join("weights.csv"), &ens.log_w)?;
        artifacts.extend(["fields.bin", "weights.csv"]);
    }
    Ok(json!({
        "lattice": cfg.lattice,
        "interaction": cfg.interaction,
        "mc": cfg.mc,
        "seed": cfg.seed,
        "estimates": {
            "phi_f_squared": ens.mean(|r| r[0] * r[0]),
            "site_second_moment": ens.mean(|r| r[1]),
            "z_ratio": ens.z_ratio(),
        },
        "acceptance": ens.acceptance,
        "artifacts": artifacts,
    }))
}

/// Low spectrum to `spectrum.csv` and ground-state metadata to
/// `ground_state.json`.
pub fn fock(cfg: &RunConfig, dir: &Path) -> Result<Value> {
    cfg.interaction.coeffs()?;
    let m = fock_model(cfg)?;
    let lines = low_spectrum(&m.h, &m.basis, cfg.fock.levels, Some(m.nodes))?;
    let failing: Vec<String> = spectrum_checks(cfg, &m, &lines).into_iter().filter(|c| !c.pass).map(|c| c.name).collect();
    ensure_dir(dir)?;
    tables::write_spectrum(&dir.join("spectrum.csv"), &lines)?;
    let meta = json!({
        "beta": cfg.lattice.beta,
        "mass": cfg.lattice.mass,
        "fock": cfg.fock,
        "poly": cfg.interaction.poly,
        "lambda": cfg.interaction.lambda,
        "dimension": m.basis.dim(),
        "quadrature_nodes": m.nodes,
        "energy": m.ground.energy,
        "gap": m.ground.gap,
        "vacuum_overlap": m.ground.vacuum_overlap(),
        "eigensolver_iterations": m.ground.iterations,
    });
    write_json(&dir.join("ground_state.json"), &meta)?;
    if !failing.is_empty() {
        return Err(CliError::Failed(failing));
    }
    Ok(meta)
}

pub struct PropagatorArgs {
    pub config: RunConfig,
    pub s: f64,
    pub t: f64,
    pub tol: f64,
    pub amplitude: f64,
    pub width: f64,
}

/// `(Ω, U(t, s) Ω)` for the drive `amplitude · bump(x / width) · φ(1)`,
/// where `φ(1)` is the field averaged over the circle and `Ω` the
/// interacting ground state.
pub fn propagator(a: &PropagatorArgs) -> Result<Value> {
    if !(a.s <= a.t) || !a.s.is_finite() || !a.t.is_finite() {
        return Err(CliError::Config(format!("need finite s <= t, got s = {}, t = {}", a.s, a.t)));
    }
    if !(a.tol > 0.0 && a.width > 0.0 && a.amplitude.is_finite()) {
        return Err(CliError::Config("need tol > 0, width > 0 and a finite amplitude".into()));
    }
    let cfg = &a.config;
    cfg.interaction.coeffs()?;
    let m = fock_model(cfg)?;
    let mut g = vec![C::new(0.0, 0.0); m.basis.mode_count()];
    let zero = m.basis.slot(0).ok_or_else(|| CliError::Config("basis has no zero mode".into()))?;
    g[zero] = C::new(cfg.lattice.beta.sqrt(), 0.0);
    let phi = Arc::new(field_operator(&m.basis, &g)?);
    let w = a.width;
    let bump: Profile = Arc::new(move |x: f64| if x.abs() < w { (1.0 - (x / w).powi(2)).powi(4) } else { 0.0 });
    let h_ren = Arc::new(renormalized(&m.h, &m.ground));
    let problem = PropagatorProblem::new(h_ren, Drive::smooth(phi, bump, (-w, w)), C::new(a.amplitude, 0.0))?.with_tol(a.tol);
    let omega = m.ground.vector_complex();
    let res = problem.apply_u(a.s, a.t, &omega)?;
    let elem: C = omega.iter().zip(&res.value).map(|(o, v)| o.conj() * v).sum();
    Ok(json!({
        "matrix_element_re": elem.re,
        "matrix_element_im": elem.im,
        "steps": res.stats.steps,
        "tol": a.tol,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_paths_split_file_and_directory() {
        assert_eq!(report_paths(Some(Path::new("r.json"))), (PathBuf::from("."), PathBuf::from("r.json")));
        assert_eq!(report_paths(Some(Path::new("a/b.json"))), (PathBuf::from("a"), PathBuf::from("a/b.json")));
        assert_eq!(report_paths(Some(Path::new("a"))), (PathBuf::from("a"), PathBuf::from("a/report.json")));
    }

    #[test]
    fn free_propagator_leaves_the_vacuum_alone() {
        let mut config = RunConfig::default();
        config.interaction.lambda = 0.0;
        config.fock.n_max = 4;
        let args = PropagatorArgs {
            config,
            s: -1.0,
            t: 1.0,
            tol: 1e-10,
            amplitude: 0.0,
            width: 0.5,
        };
        let v = propagator(&args).unwrap();
        assert!((v["matrix_element_re"].as_f64().unwrap() - 1.0).abs() < 1e-9, "{v}");
        assert!(v["matrix_element_im"].as_f64().unwrap().abs() < 1e-12);
    }
}
