//! Sharp-time Schwinger functions, Euclidean Green's functions, reflection
//! positivity and spatial clustering.

use serde::{Deserialize, Serialize};

use pphi2_core::covariance::{c0_kernel, c0_kernel_series};
use pphi2_core::interaction::{os_family_values, os_gram_exact, os_positivity_gram, reweight, GramReport, SharpTimeProbe};
use pphi2_core::lattice::{make_mollifier, MollifierKind};
use pphi2_core::stats::{self, linear_fit};
use pphi2_core::{CovKernel, Estimate, Field, InteractionSpec, LatticeData, LatticeSpec, SampleStream, TestFunction};
use pphi2_fock::heatprop::{clustering_bound, ClusterPoint, Drive};

use crate::error::{Result, SchwingerError};
use crate::report::Check;
use crate::setup::FockSide;

/// `a_x Σ_x φ(t, x) h(x)` for every time slice.
fn slice_values(field: &Field, h: &[f64]) -> Vec<f64> {
    let s = field.spec();
    (0..s.nt).map(|t| stats::pairwise_dot(field.time_slice(t), h) * s.a_x()).collect()
}

fn check_profile(spec: &LatticeSpec, h: &[f64]) -> Result<()> {
    if h.len() != spec.nx {
        return Err(SchwingerError::Config(format!("spatial profile has {} entries, lattice has n_x = {}", h.len(), spec.nx)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpTimeRow {
    pub t: f64,
    pub value: Estimate,
    /// Free lattice covariance of the two sharp-time fields.
    pub lattice_free: f64,
    /// Closed-form thermal kernel.
    pub continuum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharpTimeTable {
    pub base: usize,
    pub rows: Vec<SharpTimeRow>,
    pub checks: Vec<Check>,
}

/// `S(t) = E_{μ_l}[φ(t_b, h₁) φ(t_b + t, h₂)]` at a fixed base time `t_b`
/// for every lattice time `t`, with the reflection check
/// `S(t) = S(β - t)` measured on the same samples.
///
/// The base time is not averaged over: averaging would make the reflection
/// comparison hold sample by sample.
pub fn sharp_time_schwinger(
    kernel: &CovKernel,
    interaction: &InteractionSpec,
    h1: &[f64],
    h2: &[f64],
    base: usize,
    samples: usize,
    seed: u64,
) -> Result<SharpTimeTable> {
    let spec = *kernel.spec();
    check_profile(&spec, h1)?;
    check_profile(&spec, h2)?;
    let nt = spec.nt;
    let base = base % nt;
    let stream = SampleStream::new(kernel, seed);
    let ens = reweight(&stream, interaction, samples, |phi| {
        let mut v = slice_values(phi, h1);
        v.extend(slice_values(phi, h2));
        v
    })?;
    let mut rows = Vec::with_capacity(nt);
    let mut checks = Vec::new();
    for k in 0..nt {
        let value = ens.mean(|r| r[base] * r[nt + (base + k) % nt]);
        let lattice_free = kernel.sharp_time_covariance(k as i64, h1, h2)?;
        let t = k as f64 * spec.a_t();
        let continuum = c0_kernel(&spec, 0.0, t, h1, h2)?;
        if interaction.is_free() {
            checks.push(Check::pulls(format!("free S(t = {t:.4}) vs lattice covariance"), value.value, value.stderr, lattice_free, 4.0));
        }
        rows.push(SharpTimeRow {
            t,
            value,
            lattice_free,
            continuum,
        });
    }
    for k in 1..nt.div_ceil(2) {
        let diff = ens.mean(|r| r[base] * (r[nt + (base + k) % nt] - r[nt + (base + nt - k) % nt]));
        let t = k as f64 * spec.a_t();
        checks.push(Check::pulls(format!("S({t:.4}) - S(beta - {t:.4})"), diff.value, diff.stderr, 0.0, 4.0));
    }
    Ok(SharpTimeTable { base, rows, checks })
}

/// The sharp-time two-point function of the free field from its Matsubara
/// series against the closed-form thermal kernel.
pub fn free_kernel_check(spec: &LatticeSpec, h1: &[f64], h2: &[f64], times: &[f64], n_max: usize, tol: f64) -> Result<Vec<Check>> {
    check_profile(spec, h1)?;
    check_profile(spec, h2)?;
    times
        .iter()
        .map(|&t| {
            let series = c0_kernel_series(spec, 0.0, t, h1, h2, n_max)?;
            let closed = c0_kernel(spec, 0.0, t, h1, h2)?;
            Ok(Check::absolute(format!("free S(t = {t:.4}): Matsubara series vs closed form"), series, closed, tol))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollifierRow {
    pub k: usize,
    /// `E[(φ(δ_k ⊗ h) - φ(δ_{2k} ⊗ h))²]` under the free measure.
    pub gap: f64,
}

/// Variance gaps between successive time mollifiers; for smooth `h` they
/// fall like `1/k`, so each doubling halves them (checked to ±30%).
pub fn mollifier_cauchy(kernel: &CovKernel, h: &[f64], ks: &[usize]) -> Result<(Vec<MollifierRow>, Vec<Check>)> {
    let spec = *kernel.spec();
    check_profile(&spec, h)?;
    let mut rows = Vec::new();
    for &k in ks {
        let a = make_mollifier(&spec, MollifierKind::Time, k, 0.0)?.tensor_with(spec, h)?;
        let b = make_mollifier(&spec, MollifierKind::Time, 2 * k, 0.0)?.tensor_with(spec, h)?;
        let d = a.add(&b.scaled(-1.0))?;
        rows.push(MollifierRow { k, gap: kernel.quad(&d, &d)? });
    }
    let checks = rows
        .windows(2)
        .map(|w| Check::absolute(format!("mollifier gap ratio k = {} -> {}", w[0].k, w[1].k), w[1].gap / w[0].gap, 0.5, 0.15))
        .collect();
    Ok((rows, checks))
}

/// Bounded cylinder functionals of a sharp-time field `φ(t, h)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Cylinder {
    Const { value: f64 },
    /// `cos(scale · φ(t, h))`.
    Cos { h: Vec<f64>, scale: f64 },
    /// `e^{-φ(t, h)²}`.
    ExpSquare { h: Vec<f64> },
}

impl Cylinder {
    pub fn eval(&self, field: &Field, t_index: usize) -> f64 {
        let s = field.spec();
        let sharp = |h: &[f64]| stats::pairwise_dot(field.time_slice(t_index % s.nt), h) * s.a_x();
        match self {
            Cylinder::Const { value } => *value,
            Cylinder::Cos { h, scale } => (scale * sharp(h)).cos(),
            Cylinder::ExpSquare { h } => (-sharp(h).powi(2)).exp(),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Cylinder::Const { value } => *value >= 0.0,
            Cylinder::Cos { .. } => false,
            Cylinder::ExpSquare { .. } => true,
        }
    }

    fn profile(&self) -> Option<&[f64]> {
        match self {
            Cylinder::Const { .. } => None,
            Cylinder::Cos { h, .. } | Cylinder::ExpSquare { h } => Some(h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenReport {
    pub times: Vec<f64>,
    pub value: Estimate,
    pub checks: Vec<Check>,
}

/// `∫ Π_i U(s_i) A_i dμ_l`: each functional evaluated on the time slice at
/// `s_i`. Times must be ordered inside `[0, β)` and sit on lattice times.
pub fn euclidean_green(
    kernel: &CovKernel,
    interaction: &InteractionSpec,
    items: &[(Cylinder, f64)],
    samples: usize,
    seed: u64,
) -> Result<GreenReport> {
    let spec = *kernel.spec();
    let times: Vec<f64> = items.iter().map(|(_, s)| *s).collect();
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&s| !(0.0..spec.beta).contains(&s)) {
        return Err(SchwingerError::UnorderedTimes(times));
    }
    let mut slots = Vec::with_capacity(items.len());
    for (a, s) in items {
        let k = s / spec.a_t();
        if (k - k.round()).abs() > 1e-9 {
            return Err(SchwingerError::Config(format!("time {s} is not a lattice time (a_t = {})", spec.a_t())));
        }
        if let Some(h) = a.profile() {
            check_profile(&spec, h)?;
        }
        slots.push(k.round() as usize);
    }
    let mut checks = Vec::new();
    if items.iter().all(|(a, _)| matches!(a, Cylinder::Const { .. })) {
        let value: f64 = items.iter().map(|(a, _)| if let Cylinder::Const { value } = a { *value } else { 1.0 }).product();
        checks.push(Check::absolute("constant functionals", value, value, 0.0));
        return Ok(GreenReport {
            times,
            value: Estimate::exact(value),
            checks,
        });
    }
    let stream = SampleStream::new(kernel, seed);
    let ens = reweight(&stream, interaction, samples, |phi| {
        vec![items.iter().zip(&slots).map(|((a, _), &k)| a.eval(phi, k)).product()]
    })?;
    let value = ens.mean(|r| r[0]);
    if items.iter().all(|(a, _)| a.is_nonnegative()) {
        checks.push(Check::at_least("positive integrand", value.value, 0.0, 3.0 * value.stderr).with_stderr(value.stderr));
    }
    Ok(GreenReport { times, value, checks })
}

/// Probes `φ(t_a, h_a)` at strictly positive times below `β/2` with
/// Gaussian profiles of varying centre and width.
pub fn os_family(spec: &LatticeSpec, size: usize) -> Vec<SharpTimeProbe> {
    let half = (spec.nt / 2).max(2);
    (0..size)
        .map(|a| {
            let t_index = 1 + a % (half - 1).max(1);
            let centre = -0.5 + 0.37 * a as f64;
            let width = 0.4 + 0.15 * (a % 3) as f64;
            let h = (0..spec.nx)
                .map(|i| {
                    let u = (spec.space_coord(i) - centre) / width;
                    (0.8 + 0.1 * a as f64) * (-0.5 * u * u).exp()
                })
                .collect();
            SharpTimeProbe { t_index, h }
        })
        .collect()
}

/// Reflection Gram matrix of the free field from exact thermal pairings.
pub fn os_free_exact(spec: &LatticeSpec, family: &[SharpTimeProbe]) -> Result<(GramReport, Check)> {
    let (_, report) = os_gram_exact(spec, family)?;
    let check = Check::at_least(format!("free reflection Gram, family of {}", family.len()), report.min_eigenvalue, 0.0, 1e-10);
    Ok((report, check))
}

/// Reflection Gram matrix under `μ_l` from a reweighted ensemble; passes when
/// the minimum eigenvalue is above `-3` bootstrap errors.
pub fn os_interacting(
    kernel: &CovKernel,
    interaction: &InteractionSpec,
    family: &[SharpTimeProbe],
    samples: usize,
    bootstrap: usize,
    seed: u64,
) -> Result<(GramReport, Check)> {
    let stream = SampleStream::new(kernel, seed);
    let ens = reweight(&stream, interaction, samples, |phi| os_family_values(family, phi))?;
    let report = os_positivity_gram(&ens, family.len(), bootstrap, seed ^ 0x5eed)?;
    let check = Check::at_least(
        format!("interacting reflection Gram, family of {}", family.len()),
        report.min_eigenvalue,
        0.0,
        3.0 * report.stderr,
    )
    .with_stderr(report.stderr);
    Ok((report, check))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRow {
    pub x: f64,
    pub connected: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub rows: Vec<ClusterRow>,
    /// `-d log|connected| / dx` over the fitted rows.
    pub rate: f64,
    pub fitted: usize,
    pub checks: Vec<Check>,
}

/// `E[A · τ_x A] - E[A]²` for `A = φ(g ⊗ h)`, averaged over all spatial
/// translations of the base point. This is legitimate only when the
/// interaction fills the periodic box (`l = L`), which is enforced.
pub fn clustering_lattice(
    kernel: &CovKernel,
    interaction: &InteractionSpec,
    g: &[f64],
    h: &[f64],
    shifts: &[usize],
    samples: usize,
    seed: u64,
) -> Result<ClusterReport> {
    let spec = *kernel.spec();
    check_profile(&spec, h)?;
    if g.len() != spec.nt {
        return Err(SchwingerError::Config(format!("time profile has {} entries, n_t = {}", g.len(), spec.nt)));
    }
    if interaction.window().len() != spec.nx {
        return Err(SchwingerError::Config("translation averaging needs the interaction on the whole box".into()));
    }
    let half_box = spec.length;
    for &d in shifts {
        let shift = d as f64 * spec.a_x();
        if shift > half_box {
            return Err(SchwingerError::ShiftTooLarge { shift, half_box });
        }
    }
    let support: Vec<(usize, f64)> = h.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
    let nx = spec.nx;
    let stream = SampleStream::new(kernel, seed);
    let ens = reweight(&stream, interaction, samples, |phi| {
        // Φ(x) = a_t Σ_t g(t) φ(t, x), then P(s) = a_x Σ_i h(x_i) Φ(x_i + s).
        let mut col = vec![0.0; nx];
        for (t, gt) in g.iter().enumerate() {
            for (c, v) in col.iter_mut().zip(phi.time_slice(t)) {
                *c += gt * v;
            }
        }
        let p: Vec<f64> = (0..nx)
            .map(|s| support.iter().map(|&(i, hv)| hv * col[(i + s) % nx]).sum::<f64>() * spec.a_x() * spec.a_t())
            .collect();
        let mut out = vec![stats::mean(&p)];
        for &d in shifts {
            out.push((0..nx).map(|s| p[s] * p[(s + d) % nx]).sum::<f64>() / nx as f64);
        }
        out
    })?;
    let mean = ens.mean(|r| r[0]).value;
    let rows: Vec<ClusterRow> = shifts
        .iter()
        .enumerate()
        .map(|(j, &d)| {
            let e = ens.mean(|r| r[1 + j]);
            ClusterRow {
                x: d as f64 * spec.a_x(),
                connected: Estimate {
                    value: e.value - mean * mean,
                    ..e
                },
            }
        })
        .collect();
    // Only rows resolved at 3 standard errors enter the fit.
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.connected.value > 3.0 * r.connected.stderr)
        .map(|r| (r.x, r.connected.value.ln()))
        .unzip();
    let rate = if xs.len() >= 2 { -linear_fit(&xs, &ys).0 } else { f64::NAN };
    Ok(ClusterReport {
        fitted: xs.len(),
        rows,
        rate,
        checks: Vec::new(),
    })
}

/// Connected Weyl correlator of the free field,
/// `E[e^{iφ(f)} e^{iφ(g)}] - E[e^{iφ(f)}] E[e^{iφ(g)}] = e^{-(C(f,f)+C(g,g))/2}(e^{-C(f,g)} - 1)`.
pub fn weyl_connected_free(kernel: &CovKernel, f: &TestFunction, g: &TestFunction) -> Result<f64> {
    let (cff, cgg, cfg) = (kernel.quad(f, f)?, kernel.quad(g, g)?, kernel.quad(f, g)?);
    Ok((-0.5 * (cff + cgg)).exp() * ((-cfg).exp() - 1.0))
}

/// Monte Carlo estimate of the same connected correlator; the error bar is
/// that of the linearized estimator.
pub fn weyl_connected_mc(kernel: &CovKernel, f: &TestFunction, g: &TestFunction, samples: usize, seed: u64) -> Result<Estimate> {
    let stream = SampleStream::new(kernel, seed);
    let rows = stream.map(0..samples as u64, |_, phi| (f.pair(phi), g.pair(phi)));
    let pairs: Vec<(f64, f64)> = rows.into_iter().map(|(a, b)| Ok((a?, b?))).collect::<Result<_>>()?;
    let ca: Vec<f64> = pairs.iter().map(|p| p.0.cos()).collect();
    let cb: Vec<f64> = pairs.iter().map(|p| p.1.cos()).collect();
    let (ma, mb) = (stats::mean(&ca), stats::mean(&cb));
    let joint: Vec<f64> = pairs.iter().map(|p| (p.0 + p.1).cos()).collect();
    let lin: Vec<f64> = (0..pairs.len()).map(|i| joint[i] - mb * ca[i] - ma * cb[i]).collect();
    let (_, stderr) = stats::mean_stderr(&lin);
    Ok(Estimate {
        value: stats::mean(&joint) - ma * mb,
        stderr,
        n: samples,
        seed,
    })
}

/// Fock-side clustering: `|(Ω, U^∞(R + ξ_t R)Ω) - (Ω, U^∞(R)Ω)²|` against
/// `e^{-(|t| - 2T)a}` with 5% slack along a sweep of separations.
pub fn clustering_fock(side: &FockSide, drive: &Drive, ts: &[f64]) -> Result<(Vec<ClusterPoint>, Vec<Check>)> {
    let p = side.problem(Drive::zero())?;
    let mut points = Vec::with_capacity(ts.len());
    let mut checks = Vec::with_capacity(ts.len());
    for &t in ts {
        let c = clustering_bound(&p, &side.omega, drive, drive, t, side.gap)?;
        checks.push(Check::bound(format!("Fock clustering at t = {t}"), c.lhs, c.bound, 0.05));
        points.push(c);
    }
    Ok((points, checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use pphi2_core::SpatialSymbol;

    fn bump(spec: &LatticeSpec, centre: f64, radius: f64) -> Vec<f64> {
        (0..spec.nx)
            .map(|i| {
                let u = (spec.space_coord(i) - centre) / radius;
                if u.abs() < 1.0 { (1.0 - u * u).powi(2) } else { 0.0 }
            })
            .collect()
    }

    #[test]
    fn free_sharp_time_function_is_the_lattice_covariance() {
        let spec = LatticeSpec::new(1.0, 4.0, 8, 32, 1.0).unwrap();
        let kernel = CovKernel::new(spec);
        let inter = InteractionSpec::phi4(&kernel, 0.0, 4.0).unwrap();
        let h = bump(&spec, 0.0, 1.0);
        let table = sharp_time_schwinger(&kernel, &inter, &h, &h, 0, 20_000, 3).unwrap();
        assert!(table.checks.iter().all(|c| c.pass), "{:?}", table.checks);
        assert_eq!(table.rows.len(), 8);
    }

    #[test]
    fn green_functions_validate_times() {
        let spec = LatticeSpec::new(1.0, 2.0, 8, 16, 1.0).unwrap();
        let kernel = CovKernel::new(spec);
        let inter = InteractionSpec::phi4(&kernel, 0.1, 2.0).unwrap();
        let h = bump(&spec, 0.0, 0.5);
        let e = || Cylinder::ExpSquare { h: h.clone() };
        assert!(matches!(
            euclidean_green(&kernel, &inter, &[(e(), 0.5), (e(), 0.25)], 10, 1),
            Err(SchwingerError::UnorderedTimes(_))
        ));
        let one = euclidean_green(&kernel, &inter, &vec![(Cylinder::Const { value: 1.0 }, 0.0); 3], 10, 1).unwrap();
        assert_eq!(one.value.value, 1.0);
        let rep = euclidean_green(&kernel, &inter, &[(e(), 0.0), (e(), 0.375)], 4000, 2).unwrap();
        assert!(rep.checks[0].pass);
    }

    #[test]
    fn clustering_refuses_wrapping_shifts() {
        let spec = LatticeSpec::new(1.0, 2.0, 4, 16, 1.0).unwrap();
        let kernel = CovKernel::with_options(spec, SpatialSymbol::Transfer, Some(1)).unwrap();
        let inter = InteractionSpec::phi4(&kernel, 0.1, 2.0).unwrap();
        let h = bump(&spec, 0.0, 0.5);
        let g = vec![1.0; 4];
        assert!(matches!(
            clustering_lattice(&kernel, &inter, &g, &h, &[9], 10, 1),
            Err(SchwingerError::ShiftTooLarge { .. })
        ));
    }

    #[test]
    fn free_weyl_connected_part() {
        let spec = LatticeSpec::new(1.0, 4.0, 8, 32, 1.0).unwrap();
        let kernel = CovKernel::new(spec);
        let f = TestFunction::tensor(spec, &[1.0; 8], &bump(&spec, -0.5, 1.0)).unwrap();
        let g = f.shift_space(4);
        let exact = weyl_connected_free(&kernel, &f, &g).unwrap();
        let mc = weyl_connected_mc(&kernel, &f, &g, 20_000, 9).unwrap();
        assert!(exact.abs() > 1e-3);
        assert!(mc.pull(exact) < 4.0, "{mc:?} vs {exact}");
    }
}
