//! Wick-ordered interactions, FKN weights and the interacting measure `μ_l`.
//!
//! The interaction density is `:P(φ):` ordered against the exact lattice site
//! variance, so lattice Wick identities hold without discretization error.
//! The spatial cutoff window is the set of sites with `|x_i| ≤ l`.
//!
//! Total action of a configuration: `a_t a_x Σ_{t} Σ_{|x|≤l} :P(φ(t,x)):`.
//! Summing time slices first gives `F^l`, summing space slices first gives
//! `G_{[-l,l]}`; both are the same finite sum.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovKernel;
use crate::error::{Error, Result};
use crate::gaussian::SampleStream;
use crate::lattice::{Field, FourierPlan, LatticeData, LatticeSpec, TestFunction};
use crate::stats::{self, Estimate};
use crate::wick::WickPolynomial;

/// Physical interaction `:P:` on the spatial window `[-l, l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSpec {
    spec: LatticeSpec,
    poly: WickPolynomial<f64>,
    cutoff_l: f64,
    window: Vec<usize>,
}

/// Spatial sites with `|x_i| ≤ l`.
pub fn window_sites(spec: &LatticeSpec, l: f64) -> Result<Vec<usize>> {
    if !(l > 0.0) || l > spec.length * (1.0 + 1e-12) {
        return Err(Error::OutOfRange {
            what: "spatial cutoff l",
            detail: format!("need 0 < l <= L = {}, got {l}", spec.length),
        });
    }
    let tol = 1e-9 * spec.a_x();
    Ok((0..spec.nx).filter(|&i| spec.space_coord(i).abs() <= l + tol).collect())
}

impl InteractionSpec {
    /// `coeffs` are the coefficients `q_k` of `Σ q_k :φ^k:`; the Wick constant
    /// is taken from `kernel`.
    pub fn new(kernel: &CovKernel, coeffs: Vec<f64>, cutoff_l: f64) -> Result<Self> {
        let spec = *kernel.spec();
        let poly = WickPolynomial::new(coeffs, kernel.site_variance());
        poly.check_bounded_below()?;
        let window = window_sites(&spec, cutoff_l)?;
        Ok(InteractionSpec {
            spec,
            poly,
            cutoff_l,
            window,
        })
    }

    /// `λ :φ⁴:`.
    pub fn phi4(kernel: &CovKernel, lambda: f64, cutoff_l: f64) -> Result<Self> {
        Self::new(kernel, vec![0.0, 0.0, 0.0, 0.0, lambda], cutoff_l)
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn poly(&self) -> &WickPolynomial<f64> {
        &self.poly
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff_l
    }

    pub fn window(&self) -> &[usize] {
        &self.window
    }

    pub fn wick_constant(&self) -> f64 {
        self.poly.wick_constant
    }

    pub fn is_free(&self) -> bool {
        self.poly.is_zero()
    }

    /// `log F^l = -a_t Σ_t V_l(t)`, time slices summed last.
    pub fn log_weight(&self, field: &Field) -> f64 {
        let s = &self.spec;
        if self.is_free() {
            return 0.0;
        }
        let per_slice: Vec<f64> = (0..s.nt)
            .map(|t| {
                let row = field.time_slice(t);
                let v: Vec<f64> = self.window.iter().map(|&x| self.poly.eval_f64(row[x])).collect();
                stats::pairwise_sum(&v) * s.a_x()
            })
            .collect();
        -stats::pairwise_sum(&per_slice) * s.a_t()
    }
}

/// `V_0(t) = a_x Σ_{|x|≤l} :P:(φ(t, x))`.
pub fn eval_v0(field: &Field, poly: &WickPolynomial<f64>, t_slice: usize, l: f64) -> Result<f64> {
    let s = field.spec();
    if t_slice >= s.nt {
        return Err(Error::OutOfRange {
            what: "time slice",
            detail: format!("{t_slice} >= n_t = {}", s.nt),
        });
    }
    let window = window_sites(s, l)?;
    let row = field.time_slice(t_slice);
    let v: Vec<f64> = window.iter().map(|&x| poly.eval_f64(row[x])).collect();
    Ok(stats::pairwise_sum(&v) * s.a_x())
}

/// `V_C(x) = a_t Σ_t :P:(φ(t, x))`.
pub fn eval_vc(field: &Field, poly: &WickPolynomial<f64>, x_slice: usize) -> f64 {
    let s = field.spec();
    let v: Vec<f64> = (0..s.nt).map(|t| poly.eval_f64(field.get(t, x_slice))).collect();
    stats::pairwise_sum(&v) * s.a_t()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceAxis {
    /// Window in `t`, slices `V_l(t)`.
    Time,
    /// Window in `x`, slices `V_C(x)`.
    Space,
}

/// Half-open window `[lo, hi)` along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
    pub axis: SliceAxis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FknWeight {
    pub log_weight: f64,
    pub window: Window,
}

impl FknWeight {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// Site indices of the slices inside `window`.
pub fn window_slices(interaction: &InteractionSpec, window: &Window) -> Result<Vec<usize>> {
    let s = interaction.spec();
    if window.lo > window.hi || !window.lo.is_finite() || !window.hi.is_finite() {
        return Err(Error::InvalidWindow {
            lo: window.lo,
            hi: window.hi,
        });
    }
    let eps = 1e-12;
    match window.axis {
        SliceAxis::Time => {
            let half = 0.5 * s.beta;
            if window.lo < -half - eps || window.hi > half + eps {
                return Err(Error::OutOfRange {
                    what: "time window",
                    detail: format!("[{}, {}] not inside [-β/2, β/2]", window.lo, window.hi),
                });
            }
            let tol = 1e-9 * s.a_t();
            Ok((0..s.nt)
                .filter(|&t| {
                    let c = s.time_coord(t);
                    c >= window.lo - tol && c < window.hi - tol
                })
                .collect())
        }
        SliceAxis::Space => {
            let l = interaction.cutoff();
            if window.lo < -l - eps || window.hi > l + eps {
                return Err(Error::OutOfRange {
                    what: "space window",
                    detail: format!("[{}, {}] not inside [-l, l] = [{}, {l}]", window.lo, window.hi, -l),
                });
            }
            Ok(interaction
                .window()
                .iter()
                .copied()
                .filter(|&x| {
                    let c = s.space_coord(x);
                    c >= window.lo && c < window.hi
                })
                .collect())
        }
    }
}

/// `log_weight = -Σ_slices (slice measure) · V(slice)`. An empty window gives
/// `log_weight = 0`; `lo > hi` is an error.
pub fn fkn_weight(field: &Field, interaction: &InteractionSpec, window: Window) -> Result<FknWeight> {
    if field.spec() != interaction.spec() {
        return Err(Error::SpecMismatch);
    }
    let s = interaction.spec();
    let slices = window_slices(interaction, &window)?;
    let poly = interaction.poly();
    let per_slice: Vec<f64> = match window.axis {
        SliceAxis::Time => slices
            .iter()
            .map(|&t| {
                let row = field.time_slice(t);
                let v: Vec<f64> = interaction.window().iter().map(|&x| poly.eval_f64(row[x])).collect();
                stats::pairwise_sum(&v) * s.a_x() * s.a_t()
            })
            .collect(),
        SliceAxis::Space => slices.iter().map(|&x| eval_vc(field, poly, x) * s.a_x()).collect(),
    };
    Ok(FknWeight {
        log_weight: -stats::pairwise_sum(&per_slice),
        window,
    })
}

/// The two full-window weights `(log F^l_{[-β/2,β/2]}, log G_{[-l,l]})`.
pub fn nelson_pair(field: &Field, interaction: &InteractionSpec) -> Result<(f64, f64)> {
    let s = interaction.spec();
    let l = interaction.cutoff();
    let time = fkn_weight(
        field,
        interaction,
        Window {
            lo: -0.5 * s.beta,
            hi: 0.5 * s.beta,
            axis: SliceAxis::Time,
        },
    )?;
    let space = fkn_weight(
        field,
        interaction,
        Window {
            lo: -l,
            hi: l,
            axis: SliceAxis::Space,
        },
    )?;
    Ok((time.log_weight, space.log_weight))
}

/// Per-sample sides of the Jensen bound on a space window `[a, b)`:
/// `e^{-Σ_x a_x V_C(x)}` and the slice average of `e^{-(b-a) V_C(x)}`.
/// Convexity of `exp` makes the first never exceed the second.
pub fn jensen_sides(field: &Field, interaction: &InteractionSpec, lo: f64, hi: f64) -> Result<(f64, f64)> {
    let window = Window {
        lo,
        hi,
        axis: SliceAxis::Space,
    };
    let slices = window_slices(interaction, &window)?;
    if slices.is_empty() {
        return Ok((1.0, 1.0));
    }
    let s = interaction.spec();
    let width = slices.len() as f64 * s.a_x();
    let v: Vec<f64> = slices.iter().map(|&x| eval_vc(field, interaction.poly(), x)).collect();
    let lhs = (-stats::pairwise_sum(&v) * s.a_x()).exp();
    let rhs = stats::mean(&v.iter().map(|vx| (-width * vx).exp()).collect::<Vec<_>>());
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Reweight,
    Metropolis,
}

/// Samples from `μ_l` with per-sample observables. Fields themselves are
/// not retained.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub method: Method,
    /// FKN log-weight `log F^l` of every sample.
    pub log_w: Vec<f64>,
    values: Vec<f64>,
    width: usize,
    chains: usize,
    pub seed: u64,
    pub acceptance: Option<f64>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    /// Normalized sampling weights (uniform for Metropolis).
    pub fn weights(&self) -> Vec<f64> {
        match self.method {
            Method::Reweight => stats::normalized_weights(&self.log_w),
            Method::Metropolis => vec![1.0 / self.len() as f64; self.len()],
        }
    }

    pub fn effective_sample_size(&self) -> f64 {
        match self.method {
            Method::Reweight => stats::effective_sample_size(&self.log_w),
            Method::Metropolis => self.len() as f64,
        }
    }

    /// `E_{μ_l}[g(observables)]`.
    pub fn mean(&self, g: impl Fn(&[f64]) -> f64) -> Estimate {
        let y: Vec<f64> = (0..self.len()).map(|i| g(self.row(i))).collect();
        match self.method {
            Method::Reweight => stats::weighted_estimate(&self.log_w, &y, self.seed),
            Method::Metropolis => self.batch_estimate(&y),
        }
    }

    fn batch_estimate(&self, y: &[f64]) -> Estimate {
        let per_chain = y.len() / self.chains.max(1);
        let batches = per_chain.clamp(1, 10);
        let size = per_chain / batches;
        let mut means = Vec::new();
        for c in 0..self.chains {
            for b in 0..batches {
                let start = c * per_chain + b * size;
                means.push(stats::mean(&y[start..start + size]));
            }
        }
        let (value, stderr) = stats::mean_stderr(&means);
        Estimate {
            value,
            stderr,
            n: y.len(),
            seed: self.seed,
        }
    }

    /// `E_{dφ_C}[g · F^l]`, the unnormalized integral (reweighting only).
    pub fn unnormalized_mean(&self, g: impl Fn(&[f64]) -> f64) -> Result<Estimate> {
        if self.method != Method::Reweight {
            return Err(Error::Sampler("unnormalized integrals need Gaussian proposals".into()));
        }
        let y: Vec<f64> = (0..self.len()).map(|i| g(self.row(i)) * self.log_w[i].exp()).collect();
        Ok(stats::estimate(&y, self.seed))
    }

    /// `Z_l = ∫ F^l dφ_C`. Reweighting averages `F^l` directly; Metropolis
    /// uses `Z_l = 1 / E_{μ_l}[1/F^l]`.
    pub fn z_ratio(&self) -> Estimate {
        match self.method {
            Method::Reweight => {
                let y: Vec<f64> = self.log_w.iter().map(|l| l.exp()).collect();
                stats::estimate(&y, self.seed)
            }
            Method::Metropolis => {
                let y: Vec<f64> = self.log_w.iter().map(|l| (-l).exp()).collect();
                let inv = self.batch_estimate(&y);
                Estimate {
                    value: 1.0 / inv.value,
                    stderr: inv.stderr / (inv.value * inv.value),
                    n: inv.n,
                    seed: self.seed,
                }
            }
        }
    }
}

/// Gaussian proposals reweighted by `F^l`. Fails when the effective sample
/// size drops below `0.05 n`.
pub fn reweight<F>(stream: &SampleStream, interaction: &InteractionSpec, n: usize, observables: F) -> Result<Ensemble>
where
    F: Fn(&Field) -> Vec<f64> + Sync + Send,
{
    if stream.spec() != interaction.spec() {
        return Err(Error::SpecMismatch);
    }
    let rows = stream.map(0..n as u64, |_, phi| (interaction.log_weight(phi), observables(phi)));
    let width = rows.first().map_or(0, |r| r.1.len());
    let mut log_w = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * width);
    for (lw, v) in rows {
        if v.len() != width {
            return Err(Error::ShapeMismatch {
                expected: width,
                got: v.len(),
            });
        }
        log_w.push(lw);
        values.extend(v);
    }
    let ess = stats::effective_sample_size(&log_w);
    let threshold = 0.05 * n as f64;
    if n > 0 && ess < threshold {
        return Err(Error::LowEffectiveSampleSize { ess, threshold });
    }
    Ok(Ensemble {
        method: Method::Reweight,
        log_w,
        values,
        width,
        chains: 1,
        seed: stream.seed(),
        acceptance: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetropolisConfig {
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    /// Initial proposal width in units of the free site standard deviation.
    pub step: f64,
}

impl Default for MetropolisConfig {
    fn default() -> Self {
        MetropolisConfig {
            burn_in: 1000,
            thin: 10,
            chains: 4,
            step: 1.0,
        }
    }
}

/// Site-update Markov chain for `½ φ·C⁻¹φ + a_t a_x Σ_W :P:`.
///
/// The quadratic part is `½ a_t a_x Σ_{s,s'} φ_s κ(s - s') φ_{s'}` with
/// `κ = DFT⁻¹(1/M)`; `Aφ` is kept up to date so a proposal costs O(1) and an
/// accepted move O(sites).
pub fn metropolis<F>(
    kernel: &CovKernel,
    interaction: &InteractionSpec,
    config: &MetropolisConfig,
    seed: u64,
    n: usize,
    observables: F,
) -> Result<Ensemble>
where
    F: Fn(&Field) -> Vec<f64> + Sync + Send,
{
    let spec = *kernel.spec();
    if spec != *interaction.spec() {
        return Err(Error::SpecMismatch);
    }
    if kernel.multiplier().iter().any(|m| *m <= 0.0) {
        return Err(Error::Sampler("Metropolis needs an invertible covariance (no masked modes)".into()));
    }
    if config.chains == 0 || config.thin == 0 {
        return Err(Error::Sampler("chains and thin must be >= 1".into()));
    }
    let chains = config.chains;
    let per_chain = n.div_ceil(chains);
    let precision = precision_kernel(kernel);
    let in_window = {
        let mut w = vec![false; spec.nx];
        for &x in interaction.window() {
            w[x] = true;
        }
        w
    };
    let stream = SampleStream::new(kernel, seed);
    let results: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let start = stream.sample(u64::MAX - c as u64);
            run_chain(
                &spec,
                &precision,
                interaction,
                &in_window,
                config,
                seed,
                c as u64,
                start,
                per_chain,
                &observables,
            )
        })
        .collect();
    let mut log_w = Vec::new();
    let mut values = Vec::new();
    let mut width = 0;
    let mut acc_sum = 0.0;
    for (lw, v, acc) in results {
        width = v.len() / lw.len().max(1);
        log_w.extend(lw);
        values.extend(v);
        acc_sum += acc;
    }
    let acceptance = acc_sum / chains as f64;
    if !(0.2..=0.8).contains(&acceptance) {
        warn!("Metropolis acceptance {acceptance:.3} outside [0.2, 0.8]");
    }
    Ok(Ensemble {
        method: Method::Metropolis,
        log_w,
        values,
        width,
        chains,
        seed,
        acceptance: Some(acceptance),
    })
}

/// `a_t a_x κ(Δ)` over site offsets, `κ = DFT⁻¹(1/M)`.
fn precision_kernel(kernel: &CovKernel) -> Vec<f64> {
    let spec = kernel.spec();
    let mut buf: Vec<Complex64> = kernel.multiplier().iter().map(|m| Complex64::new(1.0 / m, 0.0)).collect();
    plain_inverse_dft(spec, &mut buf);
    buf.iter().map(|c| c.re * spec.cell()).collect()
}

/// `u(Δ) = N⁻¹ Σ_k e^{+2πi k·Δ/n} û(k)` over FFT index order.
fn plain_inverse_dft(spec: &LatticeSpec, buf: &mut [Complex64]) {
    let mut planner = rustfft::FftPlanner::new();
    let (nt, nx) = (spec.nt, spec.nx);
    let fx = planner.plan_fft_inverse(nx);
    let ft = planner.plan_fft_inverse(nt);
    for row in buf.chunks_exact_mut(nx) {
        fx.process(row);
    }
    let mut col = vec![Complex64::default(); nt];
    for x in 0..nx {
        for t in 0..nt {
            col[t] = buf[t * nx + x];
        }
        ft.process(&mut col);
        for t in 0..nt {
            buf[t * nx + x] = col[t];
        }
    }
    let norm = 1.0 / (nt * nx) as f64;
    buf.iter_mut().for_each(|c| *c *= norm);
}

#[allow(clippy::too_many_arguments)]
fn run_chain<F>(
    spec: &LatticeSpec,
    precision: &[f64],
    interaction: &InteractionSpec,
    in_window: &[bool],
    config: &MetropolisConfig,
    seed: u64,
    chain: u64,
    start: Field,
    samples: usize,
    observables: &F,
) -> (Vec<f64>, Vec<f64>, f64)
where
    F: Fn(&Field) -> Vec<f64>,
{
    let (nt, nx) = (spec.nt, spec.nx);
    let cell = spec.cell();
    let poly = interaction.poly();
    let mut phi = start.into_vec();
    let kdiag = precision[0];
    // h = Aφ
    let mut h = vec![0.0; phi.len()];
    for t in 0..nt {
        for x in 0..nx {
            let mut acc = 0.0;
            for t2 in 0..nt {
                for x2 in 0..nx {
                    let d = ((t + nt - t2) % nt) * nx + (x + nx - x2) % nx;
                    acc += precision[d] * phi[t2 * nx + x2];
                }
            }
            h[t * nx + x] = acc;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(chain);
    let mut step = config.step / kdiag.sqrt();
    let sweep = |phi: &mut Vec<f64>, h: &mut Vec<f64>, step: f64, rng: &mut ChaCha8Rng| -> usize {
        let mut accepted = 0;
        for s in 0..phi.len() {
            let z: f64 = rng.sample(StandardNormal);
            let delta = step * z;
            let old = phi[s];
            let mut ds = delta * h[s] + 0.5 * delta * delta * kdiag;
            if in_window[s % nx] {
                ds += cell * (poly.eval_f64(old + delta) - poly.eval_f64(old));
            }
            let u: f64 = rng.random();
            if ds <= 0.0 || u < (-ds).exp() {
                accepted += 1;
                phi[s] = old + delta;
                let (ts, xs) = (s / nx, s % nx);
                for t in 0..nt {
                    let dt = ((t + nt - ts) % nt) * nx;
                    let row = &mut h[t * nx..(t + 1) * nx];
                    for (x, hv) in row.iter_mut().enumerate() {
                        *hv += delta * precision[dt + (x + nx - xs) % nx];
                    }
                }
            }
        }
        accepted
    };
    let sites = phi.len();
    let mut window_acc = 0;
    for b in 0..config.burn_in {
        window_acc += sweep(&mut phi, &mut h, step, &mut rng);
        if (b + 1) % 50 == 0 {
            let rate = window_acc as f64 / (50 * sites) as f64;
            step *= (rate - 0.5).exp().clamp(0.5, 2.0);
            window_acc = 0;
        }
    }
    let mut log_w = Vec::with_capacity(samples);
    let mut values = Vec::new();
    let mut total_acc = 0usize;
    for _ in 0..samples {
        for _ in 0..config.thin {
            total_acc += sweep(&mut phi, &mut h, step, &mut rng);
        }
        let field = Field::from_vec_unchecked(*spec, phi.clone());
        log_w.push(interaction.log_weight(&field));
        values.extend(observables(&field));
    }
    let acceptance = total_acc as f64 / (samples * config.thin * sites).max(1) as f64;
    (log_w, values, acceptance)
}

/// Exact Gaussian answer for `P = σ x²` (Wick-ordered against the lattice
/// constant): the window term shifts the precision by `2σ a_t a_x` on window
/// sites, handled with the Woodbury identity on the window block.
#[derive(Debug, Clone)]
pub struct QuadraticExact {
    spec: LatticeSpec,
    plan: FourierPlan,
    multiplier: Vec<f64>,
    window: Vec<usize>,
    /// `(I/(2σ a_t a_x) + Σ_WW)⁻¹`
    core: DMatrix<f64>,
    pub log_z_ratio: f64,
}

impl QuadraticExact {
    pub fn new(kernel: &CovKernel, sigma: f64, l: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be > 0, got {sigma}")));
        }
        let spec = *kernel.spec();
        let nx_win = window_sites(&spec, l)?;
        let window: Vec<usize> = (0..spec.nt)
            .flat_map(|t| nx_win.iter().map(move |&x| t * spec.nx + x))
            .collect();
        let gamma = site_covariance(kernel);
        let w = window.len();
        let cov = |a: usize, b: usize| {
            let (ta, xa) = (a / spec.nx, a % spec.nx);
            let (tb, xb) = (b / spec.nx, b % spec.nx);
            gamma[((ta + spec.nt - tb) % spec.nt) * spec.nx + (xa + spec.nx - xb) % spec.nx]
        };
        let s_ww = DMatrix::from_fn(w, w, |i, j| cov(window[i], window[j]));
        let alpha = 2.0 * sigma * spec.cell();
        let det_part = DMatrix::identity(w, w) + &s_ww * alpha;
        let chol = det_part
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Domain("window block not positive definite".into()))?;
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let c = kernel.site_variance();
        let log_z_ratio = sigma * spec.cell() * c * w as f64 - 0.5 * log_det;
        let core_mat = DMatrix::identity(w, w) / alpha + s_ww;
        let core = core_mat
            .cholesky()
            .ok_or_else(|| Error::Domain("Woodbury core not positive definite".into()))?
            .inverse();
        Ok(QuadraticExact {
            spec,
            plan: FourierPlan::new(spec),
            multiplier: kernel.multiplier().to_vec(),
            window,
            core,
            log_z_ratio,
        })
    }

    pub fn z_ratio(&self) -> f64 {
        self.log_z_ratio.exp()
    }

    /// `Σ g` as a lattice function (free site covariance applied to `g`).
    fn apply_cov(&self, g: &TestFunction) -> Vec<f64> {
        let mut buf: Vec<Complex64> = g.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.plan.forward(&mut buf).expect("sized");
        for (c, m) in buf.iter_mut().zip(&self.multiplier) {
            *c *= m;
        }
        self.plan.inverse(&mut buf).expect("sized");
        buf.iter().map(|c| c.re).collect()
    }

    /// `E_{μ_l}[φ(f) φ(g)]`.
    pub fn two_point(&self, f: &TestFunction, g: &TestFunction) -> Result<f64> {
        if *f.spec() != self.spec || *g.spec() != self.spec {
            return Err(Error::SpecMismatch);
        }
        // C(f, g) = ⟨f, C g⟩ on the lattice.
        let cg = self.apply_cov(g);
        let cf = self.apply_cov(f);
        let free = f.pair_values(&cg);
        let uf = DVector::from_iterator(self.window.len(), self.window.iter().map(|&s| cf[s] * self.spec.cell()));
        let ug = DVector::from_iterator(self.window.len(), self.window.iter().map(|&s| cg[s] * self.spec.cell()));
        // cell² fᵀΣ_{:,W} core Σ_{W,:} g with (Σg)_s = (Cg)_s / cell.
        let corr = uf.dot(&(&self.core * ug)) / (self.spec.cell() * self.spec.cell());
        Ok(free - corr)
    }
}

/// Site covariance `γ(Δ) = E[φ(s + Δ) φ(s)]` over offsets in FFT order.
pub fn site_covariance(kernel: &CovKernel) -> Vec<f64> {
    let spec = kernel.spec();
    let mut buf: Vec<Complex64> = kernel.multiplier().iter().map(|m| Complex64::new(*m, 0.0)).collect();
    plain_inverse_dft(spec, &mut buf);
    buf.iter().map(|c| c.re / spec.cell()).collect()
}

/// Sharp-time probe `φ(t_k, h) = a_x Σ_x φ(t_k, x) h(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpTimeProbe {
    pub t_index: usize,
    pub h: Vec<f64>,
}

impl SharpTimeProbe {
    pub fn eval(&self, field: &Field) -> f64 {
        let s = field.spec();
        stats::pairwise_dot(field.time_slice(self.t_index % s.nt), &self.h) * s.a_x()
    }

    pub fn reflected(&self, spec: &LatticeSpec) -> SharpTimeProbe {
        SharpTimeProbe {
            t_index: (spec.nt - self.t_index % spec.nt) % spec.nt,
            h: self.h.clone(),
        }
    }
}

/// Per-sample values used by [`os_positivity_gram`]: `φ(t_a, h_a)` for all
/// members followed by `φ(-t_a, h_a)` for all members.
pub fn os_family_values(family: &[SharpTimeProbe], field: &Field) -> Vec<f64> {
    let spec = field.spec();
    let mut v: Vec<f64> = family.iter().map(|p| p.eval(field)).collect();
    v.extend(family.iter().map(|p| p.reflected(spec).eval(field)));
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramReport {
    pub size: usize,
    pub min_eigenvalue: f64,
    /// Bootstrap standard error of the minimum eigenvalue (0 when exact).
    pub stderr: f64,
    pub diagonal: Vec<f64>,
}

/// Smallest eigenvalue of a Hermitian matrix given row-major, via the real
/// symmetric embedding `[[Re, -Im], [Im, Re]]`.
pub fn min_hermitian_eigenvalue(m: &[Complex64], n: usize) -> f64 {
    let big = DMatrix::from_fn(2 * n, 2 * n, |i, j| {
        let z = m[(i % n) * n + j % n];
        match (i < n, j < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let sym = (&big + big.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

fn gram_from_rows(rows: &[&[f64]], weights: &[f64], n: usize) -> Vec<Complex64> {
    let mut m = vec![Complex64::default(); n * n];
    for (row, w) in rows.iter().zip(weights) {
        for a in 0..n {
            let minus = row[n + a];
            for b in 0..n {
                m[a * n + b] += Complex64::from_polar(*w, row[b] - minus);
            }
        }
    }
    let mut herm = m.clone();
    for a in 0..n {
        for b in 0..n {
            herm[a * n + b] = 0.5 * (m[a * n + b] + m[b * n + a].conj());
        }
    }
    herm
}

/// Reflection Gram matrix `M_ab = E[Θ(F_a) F_b]` for `F_a = e^{iφ(t_a, h_a)}`,
/// `Θ(F)(φ) = conj(F(φ(-·)))`, from an ensemble whose observables are
/// [`os_family_values`]. Returns the minimum eigenvalue with a bootstrap error.
pub fn os_positivity_gram(ensemble: &Ensemble, family_size: usize, bootstrap: usize, seed: u64) -> Result<GramReport> {
    if ensemble.len() < family_size {
        return Err(Error::TooFewSamples {
            samples: ensemble.len(),
            needed: family_size,
        });
    }
    if ensemble.width() != 2 * family_size {
        return Err(Error::ShapeMismatch {
            expected: 2 * family_size,
            got: ensemble.width(),
        });
    }
    let n = family_size;
    let rows: Vec<&[f64]> = (0..ensemble.len()).map(|i| ensemble.row(i)).collect();
    let weights = ensemble.weights();
    let m = gram_from_rows(&rows, &weights, n);
    let min_eigenvalue = min_hermitian_eigenvalue(&m, n);
    let reps: Vec<f64> = stats::bootstrap_indices(rows.len(), bootstrap, seed)
        .into_par_iter()
        .map(|idx| {
            let r: Vec<&[f64]> = idx.iter().map(|&i| rows[i]).collect();
            let lw: Vec<f64> = idx.iter().map(|&i| ensemble.log_w[i]).collect();
            let w = match ensemble.method {
                Method::Reweight => stats::normalized_weights(&lw),
                Method::Metropolis => vec![1.0 / idx.len() as f64; idx.len()],
            };
            min_hermitian_eigenvalue(&gram_from_rows(&r, &w, n), n)
        })
        .collect();
    let stderr = if reps.len() > 1 { stats::mean_stderr(&reps).1 * (reps.len() as f64).sqrt() } else { 0.0 };
    Ok(GramReport {
        size: n,
        min_eigenvalue,
        stderr,
        diagonal: (0..n).map(|a| m[a * n + a].re).collect(),
    })
}

/// Free-field reflection Gram matrix from exact Gaussian pairings:
/// `M_ab = exp(-½ Var(φ(t_b, h_b) - φ(-t_a, h_a)))`, with the sharp-time
/// covariance given by the closed-form thermal kernel.
pub fn os_gram_exact(spec: &LatticeSpec, family: &[SharpTimeProbe]) -> Result<(Vec<Complex64>, GramReport)> {
    gram_from_covariance(family, |dt, h1, h2| {
        crate::covariance::c0_kernel(spec, 0.0, dt as f64 * spec.a_t(), h1, h2)
    })
}

/// As [`os_gram_exact`] with the lattice covariance of `kernel`.
pub fn os_gram_lattice(kernel: &CovKernel, family: &[SharpTimeProbe]) -> Result<(Vec<Complex64>, GramReport)> {
    gram_from_covariance(family, |dt, h1, h2| kernel.sharp_time_covariance(dt, h1, h2))
}

fn gram_from_covariance(
    family: &[SharpTimeProbe],
    cov: impl Fn(i64, &[f64], &[f64]) -> Result<f64>,
) -> Result<(Vec<Complex64>, GramReport)> {
    let n = family.len();
    let var: Vec<f64> = family.iter().map(|p| cov(0, &p.h, &p.h)).collect::<Result<_>>()?;
    let mut m = vec![Complex64::default(); n * n];
    for a in 0..n {
        for b in 0..n {
            let dt = family[b].t_index as i64 + family[a].t_index as i64;
            let cab = cov(dt, &family[a].h, &family[b].h)?;
            m[a * n + b] = Complex64::new((-0.5 * (var[a] + var[b] - 2.0 * cab)).exp(), 0.0);
        }
    }
    let report = GramReport {
        size: n,
        min_eigenvalue: min_hermitian_eigenvalue(&m, n),
        stderr: 0.0,
        diagonal: (0..n).map(|a| m[a * n + a].re).collect(),
    };
    Ok((m, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn setup() -> (LatticeSpec, CovKernel) {
        let s = LatticeSpec::new(1.0, 2.0, 8, 16, 1.0).unwrap();
        (s, CovKernel::new(s))
    }

    #[test]
    fn window_counts() {
        let s = LatticeSpec::new(1.0, 4.0, 8, 32, 1.0).unwrap();
        assert_eq!(window_sites(&s, 2.0).unwrap().len(), 16);
        assert_eq!(window_sites(&s, 4.0).unwrap().len(), 32);
        assert!(window_sites(&s, 4.5).is_err());
    }

    #[test]
    fn constant_field_closed_forms() {
        let (s, k) = setup();
        let c = k.site_variance();
        let zero = Field::zeros(s);
        let p4 = WickPolynomial::new(vec![0.0, 0.0, 0.0, 0.0, 1.0], c);
        let v = eval_v0(&zero, &p4, 0, 1.0).unwrap();
        assert_abs_diff_eq!(v, 2.0 * 3.0 * c * c, epsilon = 1e-12);
        let p2 = WickPolynomial::new(vec![0.0, 0.0, 1.0], c);
        let f = Field::constant(s, 0.7);
        assert_abs_diff_eq!(eval_vc(&f, &p2, 3), s.beta * (0.49 - c), epsilon = 1e-12);
        assert!(eval_v0(&zero, &p4, 0, 3.0).is_err());
    }

    #[test]
    fn v0_additive_in_l() {
        let (s, k) = setup();
        let phi = SampleStream::new(&k, 5).sample(0);
        let p = WickPolynomial::new(vec![0.0, 0.0, 0.3, 0.0, 1.0], k.site_variance());
        let small = eval_v0(&phi, &p, 2, 0.5).unwrap();
        let big = eval_v0(&phi, &p, 2, 1.5).unwrap();
        let annulus: f64 = (0..s.nx)
            .filter(|&x| {
                let c = s.space_coord(x).abs();
                c > 0.5 && c <= 1.5
            })
            .map(|x| p.eval_f64(phi.get(2, x)) * s.a_x())
            .sum();
        assert_abs_diff_eq!(big - small, annulus, epsilon = 1e-12);
    }

    #[test]
    fn vc_shift_invariant() {
        let (_, k) = setup();
        let phi = SampleStream::new(&k, 6).sample(0);
        let p = WickPolynomial::new(vec![0.0, 0.0, 1.0], k.site_variance());
        assert_abs_diff_eq!(eval_vc(&phi, &p, 4), eval_vc(&phi.shift_time(3), &p, 4), epsilon = 1e-13);
    }

    #[test]
    fn windows() {
        let (s, k) = setup();
        let int = InteractionSpec::phi4(&k, 0.1, 1.0).unwrap();
        let phi = SampleStream::new(&k, 7).sample(0);
        let empty = Window { lo: 0.2, hi: 0.2, axis: SliceAxis::Time };
        assert_eq!(fkn_weight(&phi, &int, empty).unwrap().log_weight, 0.0);
        let bad = Window { lo: 0.3, hi: 0.2, axis: SliceAxis::Time };
        assert!(matches!(fkn_weight(&phi, &int, bad), Err(Error::InvalidWindow { .. })));
        let outside = Window { lo: -2.0, hi: 0.0, axis: SliceAxis::Space };
        assert!(fkn_weight(&phi, &int, outside).is_err());
        // Halves add up to the full window.
        let half = |lo, hi| fkn_weight(&phi, &int, Window { lo, hi, axis: SliceAxis::Time }).unwrap().log_weight;
        let full = half(-0.5 * s.beta, 0.5 * s.beta);
        assert_abs_diff_eq!(half(-0.5, 0.0) + half(0.0, 0.5), full, epsilon = 1e-12);
        let (t, x) = nelson_pair(&phi, &int).unwrap();
        assert_abs_diff_eq!(t, x, epsilon = 1e-12 * t.abs().max(1.0));
        assert_abs_diff_eq!(int.log_weight(&phi), t, epsilon = 1e-12 * t.abs().max(1.0));
    }

    #[test]
    fn interaction_validation() {
        let (_, k) = setup();
        assert!(InteractionSpec::new(&k, vec![0.0, 0.0, 0.0, 1.0], 1.0).is_err());
        assert!(InteractionSpec::new(&k, vec![0.0, 0.0, -1.0], 1.0).is_err());
        assert!(InteractionSpec::phi4(&k, 0.1, 2.5).is_err());
    }

    #[test]
    fn free_reweight_has_unit_weights() {
        let (_, k) = setup();
        let int = InteractionSpec::new(&k, vec![], 1.0).unwrap();
        let stream = SampleStream::new(&k, 1);
        let e = reweight(&stream, &int, 100, |phi| vec![phi.get(0, 0)]).unwrap();
        assert!(e.log_w.iter().all(|l| *l == 0.0));
        assert_abs_diff_eq!(e.weights().iter().sum::<f64>(), 1.0, epsilon = 1e-14);
        assert_eq!(e.row(3)[0], stream.sample(3).get(0, 0));
    }

    #[test]
    fn precision_kernel_inverts_covariance() {
        let (s, k) = setup();
        let a = precision_kernel(&k);
        let g = site_covariance(&k);
        // Σ_Δ' A(Δ - Δ') γ(Δ') = δ_Δ / cell ... times cell: A·Γ = I.
        let (nt, nx) = (s.nt, s.nx);
        for probe in [0usize, 5, 37] {
            let (t, x) = (probe / nx, probe % nx);
            let mut acc = 0.0;
            for t2 in 0..nt {
                for x2 in 0..nx {
                    let d1 = ((t + nt - t2) % nt) * nx + (x + nx - x2) % nx;
                    acc += a[d1] * g[t2 * nx + x2];
                }
            }
            let expected = if probe == 0 { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(acc, expected, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(g[0], k.site_variance(), epsilon = 1e-12);
    }

    #[test]
    fn metropolis_rejects_masked_kernel() {
        let s = LatticeSpec::new(1.0, 2.0, 8, 16, 1.0).unwrap();
        let k = CovKernel::with_options(s, crate::covariance::SpatialSymbol::Continuum, Some(3)).unwrap();
        let int = InteractionSpec::phi4(&k, 0.1, 1.0).unwrap();
        let r = metropolis(&k, &int, &MetropolisConfig::default(), 1, 10, |_| vec![]);
        assert!(r.is_err());
    }

    #[test]
    fn hermitian_min_eigenvalue() {
        let m = vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(2.0, 0.0),
        ];
        assert_abs_diff_eq!(min_hermitian_eigenvalue(&m, 2), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn quadratic_exact_matches_dense_inverse() {
        let s = LatticeSpec::new(1.0, 1.0, 4, 8, 1.0).unwrap();
        let k = CovKernel::new(s);
        let sigma = 0.4;
        let q = QuadraticExact::new(&k, sigma, 0.5).unwrap();
        let g = site_covariance(&k);
        let n = s.sites();
        let cov = DMatrix::from_fn(n, n, |a, b| {
            let (ta, xa, tb, xb) = (a / s.nx, a % s.nx, b / s.nx, b % s.nx);
            g[((ta + s.nt - tb) % s.nt) * s.nx + (xa + s.nx - xb) % s.nx]
        });
        let win = window_sites(&s, 0.5).unwrap();
        let mut prec = cov.clone().try_inverse().unwrap();
        for t in 0..s.nt {
            for &x in &win {
                prec[(t * s.nx + x, t * s.nx + x)] += 2.0 * sigma * s.cell();
            }
        }
        let cov2 = prec.try_inverse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = TestFunction::new(s, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let h = TestFunction::new(s, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let fv = DVector::from_column_slice(f.values());
        let hv = DVector::from_column_slice(h.values());
        let dense = fv.dot(&(&cov2 * hv)) * s.cell() * s.cell();
        assert_abs_diff_eq!(q.two_point(&f, &h).unwrap(), dense, epsilon = 1e-10);
        // Z from determinants of the full covariances.
        let det_ratio = cov2.determinant() / cov.determinant();
        let c = k.site_variance();
        let z = det_ratio.sqrt() * (sigma * s.cell() * c * (win.len() * s.nt) as f64).exp();
        assert_abs_diff_eq!(q.z_ratio(), z, epsilon = 1e-10 * z);
    }

    #[test]
    fn exact_gram_is_psd_and_symmetric() {
        let s = LatticeSpec::new(1.0, 3.0, 16, 32, 1.0).unwrap();
        let _ = CovKernel::new(s);
        let h: Vec<f64> = (0..s.nx).map(|i| (-(s.space_coord(i)).powi(2)).exp()).collect();
        let family: Vec<SharpTimeProbe> = (0..8).map(|a| SharpTimeProbe { t_index: a, h: h.iter().map(|v| v * (1.0 + 0.1 * a as f64)).collect() }).collect();
        let (m, r) = os_gram_exact(&s, &family).unwrap();
        assert!(r.min_eigenvalue >= -1e-10, "{}", r.min_eigenvalue);
        // The finite-difference time symbol is reflection positive on the lattice.
        let fd = CovKernel::with_options(s, crate::covariance::SpatialSymbol::FiniteDifference, None).unwrap();
        let (_, rl) = os_gram_lattice(&fd, &family).unwrap();
        assert!(rl.min_eigenvalue >= -1e-10, "{}", rl.min_eigenvalue);
        for a in 0..8 {
            for b in 0..8 {
                assert_abs_diff_eq!(m[a * 8 + b].re, m[b * 8 + a].re, epsilon = 1e-12);
            }
        }
    }
}
