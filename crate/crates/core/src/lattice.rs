//! Discretization of the cylinder `S_β × [-L, L]`.
//!
//! Time sites sit at `t_k = k·a_t` (`k = 0..n_t`), read modulo β in `[-β/2, β/2)`.
//! Space sites sit at cell midpoints `x_i = -L + (i + 1/2)·a_x`, so the box is
//! reflection symmetric about `x = 0` and a window `[-l, l]` with `l` a multiple
//! of `a_x` contains exactly `2l/a_x` sites.
//!
//! Fourier conventions (lattice versions of the continuum transforms):
//!
//! ```text
//! time   û_n(x) = β^{-1/2} · a_t · Σ_k e^{-i ν_n t_k} u(t_k, x)
//!        u(t_k) = β^{-1/2} · Σ_n e^{+i ν_n t_k} û_n
//! space  û(t, p_j) = (2π)^{-1/2} · a_x · Σ_i e^{-i p_j x_i} u(t, x_i)
//!        u(x_i)    = (2π)^{-1/2} · Δp · Σ_j e^{+i p_j x_i} û(p_j)
//! ```
//!
//! with `ν_n = 2πn/β`, `p_j = 2πj/(2L)`, `Δp = 2π/(2L)`. Spectral arrays use FFT
//! index order: index `k < n/2` is frequency `k`, index `k ≥ n/2` is `k - n`, so
//! the Nyquist index `n/2` carries frequency `-n/2`. Parseval reads
//! `Σ a_t|u|² = Σ|û|²` in time and `Σ a_x|u|² = Σ Δp|û|²` in space.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of the discretized cylinder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub beta: f64,
    /// Half spatial extent `L`; the periodic box has circumference `2L`.
    pub length: f64,
    pub nt: usize,
    pub nx: usize,
    pub mass: f64,
}

impl LatticeSpec {
    pub fn new(beta: f64, length: f64, nt: usize, nx: usize, mass: f64) -> Result<Self> {
        let spec = LatticeSpec {
            beta,
            length,
            nt,
            nx,
            mass,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: LatticeSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.beta) {
            return Err(Error::InvalidSpec(format!("beta must be > 0, got {}", self.beta)));
        }
        if !positive(self.length) {
            return Err(Error::InvalidSpec(format!("length must be > 0, got {}", self.length)));
        }
        if !positive(self.mass) {
            return Err(Error::InvalidSpec(format!("mass must be > 0, got {}", self.mass)));
        }
        for (name, n) in [("nt", self.nt), ("nx", self.nx)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidSpec(format!("{name} must be even and >= 4, got {n}")));
            }
        }
        Ok(())
    }

    pub fn a_t(&self) -> f64 {
        self.beta / self.nt as f64
    }

    pub fn a_x(&self) -> f64 {
        2.0 * self.length / self.nx as f64
    }

    /// Site measure `a_t · a_x`.
    pub fn cell(&self) -> f64 {
        self.a_t() * self.a_x()
    }

    pub fn sites(&self) -> usize {
        self.nt * self.nx
    }

    /// Spacing of the spatial momentum grid, `2π / 2L`.
    pub fn dp(&self) -> f64 {
        PI / self.length
    }

    /// Signed frequency label of FFT index `k` on an axis of `n` points.
    pub fn signed_index(k: usize, n: usize) -> i64 {
        if k < n / 2 {
            k as i64
        } else {
            k as i64 - n as i64
        }
    }

    /// FFT index of signed frequency label `m`.
    pub fn fft_index(m: i64, n: usize) -> usize {
        m.rem_euclid(n as i64) as usize
    }

    /// Matsubara frequency `ν_n` at FFT index `k`.
    pub fn matsubara(&self, k: usize) -> f64 {
        2.0 * PI * Self::signed_index(k, self.nt) as f64 / self.beta
    }

    /// Spatial momentum `p_j` at FFT index `j`.
    pub fn momentum(&self, j: usize) -> f64 {
        self.dp() * Self::signed_index(j, self.nx) as f64
    }

    /// Time coordinate of site `k`, wrapped to `[-β/2, β/2)`.
    pub fn time_coord(&self, k: usize) -> f64 {
        let t = k as f64 * self.a_t();
        if t >= 0.5 * self.beta - 1e-12 * self.beta {
            t - self.beta
        } else {
            t
        }
    }

    pub fn space_coord(&self, i: usize) -> f64 {
        -self.length + (i as f64 + 0.5) * self.a_x()
    }

    /// Index of the time site nearest to `t` (mod β).
    pub fn time_index(&self, t: f64) -> usize {
        let k = (t / self.a_t()).round() as i64;
        k.rem_euclid(self.nt as i64) as usize
    }

    pub fn idx(&self, t: usize, x: usize) -> usize {
        t * self.nx + x
    }
}

/// Real-valued lattice function with its geometry; shared shape of [`Field`]
/// and [`TestFunction`].
pub trait LatticeData {
    fn spec(&self) -> &LatticeSpec;
    fn values(&self) -> &[f64];
}

fn check_values(spec: &LatticeSpec, data: &[f64]) -> Result<()> {
    if data.len() != spec.sites() {
        return Err(Error::ShapeMismatch {
            expected: spec.sites(),
            got: data.len(),
        });
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i));
    }
    Ok(())
}

/// A real field configuration `φ(t_k, x_i)`, row-major with time outer.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    spec: LatticeSpec,
    data: Vec<f64>,
}

impl Field {
    pub fn new(spec: LatticeSpec, data: Vec<f64>) -> Result<Self> {
        check_values(&spec, &data)?;
        Ok(Field { spec, data })
    }

    pub fn zeros(spec: LatticeSpec) -> Self {
        Field {
            spec,
            data: vec![0.0; spec.sites()],
        }
    }

    pub fn constant(spec: LatticeSpec, v: f64) -> Self {
        Field {
            spec,
            data: vec![v; spec.sites()],
        }
    }

    pub(crate) fn from_vec_unchecked(spec: LatticeSpec, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), spec.sites());
        Field { spec, data }
    }

    pub fn get(&self, t: usize, x: usize) -> f64 {
        self.data[self.spec.idx(t, x)]
    }

    pub fn time_slice(&self, t: usize) -> &[f64] {
        &self.data[t * self.spec.nx..(t + 1) * self.spec.nx]
    }

    /// Values along the time circle at spatial site `x`.
    pub fn space_slice(&self, x: usize) -> Vec<f64> {
        (0..self.spec.nt).map(|t| self.get(t, x)).collect()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Cyclic shift `φ'(t_k, x) = φ(t_{k-s}, x)`.
    pub fn shift_time(&self, s: i64) -> Field {
        let (nt, nx) = (self.spec.nt, self.spec.nx);
        let mut out = vec![0.0; self.data.len()];
        for t in 0..nt {
            let src = (t as i64 - s).rem_euclid(nt as i64) as usize;
            out[t * nx..(t + 1) * nx].copy_from_slice(&self.data[src * nx..(src + 1) * nx]);
        }
        Field::from_vec_unchecked(self.spec, out)
    }

    /// Cyclic shift `φ'(t, x_i) = φ(t, x_{i-s})`.
    pub fn shift_space(&self, s: i64) -> Field {
        let (nt, nx) = (self.spec.nt, self.spec.nx);
        let mut out = vec![0.0; self.data.len()];
        for t in 0..nt {
            for x in 0..nx {
                let src = (x as i64 - s).rem_euclid(nx as i64) as usize;
                out[t * nx + x] = self.data[t * nx + src];
            }
        }
        Field::from_vec_unchecked(self.spec, out)
    }

    /// Time reflection `φ'(t, x) = φ(-t, x)`.
    pub fn reflect_time(&self) -> Field {
        let (nt, nx) = (self.spec.nt, self.spec.nx);
        let mut out = vec![0.0; self.data.len()];
        for t in 0..nt {
            let src = (nt - t) % nt;
            out[t * nx..(t + 1) * nx].copy_from_slice(&self.data[src * nx..(src + 1) * nx]);
        }
        Field::from_vec_unchecked(self.spec, out)
    }
}

impl LatticeData for Field {
    fn spec(&self) -> &LatticeSpec {
        &self.spec
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
}

/// A discretized test function `f(t_k, x_i)`; pairs with fields using the
/// site measure `a_t · a_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    spec: LatticeSpec,
    data: Vec<f64>,
}

impl TestFunction {
    pub fn new(spec: LatticeSpec, data: Vec<f64>) -> Result<Self> {
        check_values(&spec, &data)?;
        Ok(TestFunction { spec, data })
    }

    pub fn zeros(spec: LatticeSpec) -> Self {
        TestFunction {
            spec,
            data: vec![0.0; spec.sites()],
        }
    }

    /// Samples `f(t, x)` at the site coordinates.
    pub fn from_fn(spec: LatticeSpec, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(spec.sites());
        for t in 0..spec.nt {
            let tc = spec.time_coord(t);
            for x in 0..spec.nx {
                data.push(f(tc, spec.space_coord(x)));
            }
        }
        Self::new(spec, data)
    }

    /// `g(t) ⊗ h(x)` from per-axis profiles.
    pub fn tensor(spec: LatticeSpec, g_t: &[f64], h_x: &[f64]) -> Result<Self> {
        if g_t.len() != spec.nt {
            return Err(Error::ShapeMismatch {
                expected: spec.nt,
                got: g_t.len(),
            });
        }
        if h_x.len() != spec.nx {
            return Err(Error::ShapeMismatch {
                expected: spec.nx,
                got: h_x.len(),
            });
        }
        let mut data = Vec::with_capacity(spec.sites());
        for g in g_t {
            data.extend(h_x.iter().map(|h| g * h));
        }
        Self::new(spec, data)
    }

    /// Sharp-time test function `a_t^{-1} δ_{t,t_k} ⊗ h`, i.e. the lattice
    /// field `φ(t_k, h) = Σ_x a_x φ(t_k, x) h(x)`.
    pub fn sharp_time(spec: LatticeSpec, t_index: usize, h_x: &[f64]) -> Result<Self> {
        let mut g = vec![0.0; spec.nt];
        g[t_index % spec.nt] = 1.0 / spec.a_t();
        Self::tensor(spec, &g, h_x)
    }

    pub fn get(&self, t: usize, x: usize) -> f64 {
        self.data[self.spec.idx(t, x)]
    }

    /// Values along the time circle at spatial site `x` (the slice `f_x`).
    pub fn space_slice(&self, x: usize) -> Vec<f64> {
        (0..self.spec.nt).map(|t| self.get(t, x)).collect()
    }

    /// `φ(f) = Σ a_t a_x φ(t, x) f(t, x)`.
    pub fn pair(&self, field: &Field) -> Result<f64> {
        if self.spec != field.spec {
            return Err(Error::SpecMismatch);
        }
        Ok(self.pair_values(&field.data))
    }

    pub(crate) fn pair_values(&self, values: &[f64]) -> f64 {
        self.spec.cell() * crate::stats::pairwise_dot(&self.data, values)
    }

    pub fn scaled(&self, s: f64) -> TestFunction {
        TestFunction {
            spec: self.spec,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &TestFunction) -> Result<TestFunction> {
        if self.spec != other.spec {
            return Err(Error::SpecMismatch);
        }
        Ok(TestFunction {
            spec: self.spec,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn shift_space(&self, s: i64) -> TestFunction {
        let f = Field::from_vec_unchecked(self.spec, self.data.clone()).shift_space(s);
        TestFunction {
            spec: self.spec,
            data: f.into_vec(),
        }
    }

    pub fn shift_time(&self, s: i64) -> TestFunction {
        let f = Field::from_vec_unchecked(self.spec, self.data.clone()).shift_time(s);
        TestFunction {
            spec: self.spec,
            data: f.into_vec(),
        }
    }

    pub fn reflect_time(&self) -> TestFunction {
        let f = Field::from_vec_unchecked(self.spec, self.data.clone()).reflect_time();
        TestFunction {
            spec: self.spec,
            data: f.into_vec(),
        }
    }

    /// Spatial sites on which the function is not identically zero.
    pub fn spatial_support(&self) -> Option<(usize, usize)> {
        let nonzero: Vec<usize> = (0..self.spec.nx)
            .filter(|&x| (0..self.spec.nt).any(|t| self.get(t, x) != 0.0))
            .collect();
        Some((*nonzero.first()?, *nonzero.last()?))
    }
}

impl LatticeData for TestFunction {
    fn spec(&self) -> &LatticeSpec {
        &self.spec
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
}

/// Precomputed FFT plans for one lattice geometry.
#[derive(Clone)]
pub struct FourierPlan {
    spec: LatticeSpec,
    t_fwd: Arc<dyn Fft<f64>>,
    t_inv: Arc<dyn Fft<f64>>,
    x_fwd: Arc<dyn Fft<f64>>,
    x_inv: Arc<dyn Fft<f64>>,
    /// `e^{-i p_j (x_0)}`, the offset phase of the midpoint grid.
    x_phase: Vec<Complex64>,
}

impl std::fmt::Debug for FourierPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierPlan").field("spec", &self.spec).finish()
    }
}

impl FourierPlan {
    pub fn new(spec: LatticeSpec) -> Self {
        let mut planner = FftPlanner::new();
        let x0 = spec.space_coord(0);
        let x_phase = (0..spec.nx)
            .map(|j| Complex64::from_polar(1.0, -spec.momentum(j) * x0))
            .collect();
        FourierPlan {
            spec,
            t_fwd: planner.plan_fft_forward(spec.nt),
            t_inv: planner.plan_fft_inverse(spec.nt),
            x_fwd: planner.plan_fft_forward(spec.nx),
            x_inv: planner.plan_fft_inverse(spec.nx),
            x_phase,
        }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    fn check(&self, len: usize, expected: usize) -> Result<()> {
        if len != expected {
            return Err(Error::ShapeMismatch { expected, got: len });
        }
        Ok(())
    }

    /// One time profile (length `n_t`), in place.
    pub fn forward_t_1d(&self, v: &mut [Complex64]) -> Result<()> {
        self.check(v.len(), self.spec.nt)?;
        self.t_fwd.process(v);
        let s = self.spec.a_t() / self.spec.beta.sqrt();
        v.iter_mut().for_each(|c| *c *= s);
        Ok(())
    }

    pub fn inverse_t_1d(&self, v: &mut [Complex64]) -> Result<()> {
        self.check(v.len(), self.spec.nt)?;
        self.t_inv.process(v);
        let s = 1.0 / self.spec.beta.sqrt();
        v.iter_mut().for_each(|c| *c *= s);
        Ok(())
    }

    /// One spatial profile (length `n_x`), in place.
    pub fn forward_x_1d(&self, v: &mut [Complex64]) -> Result<()> {
        self.check(v.len(), self.spec.nx)?;
        self.x_fwd.process(v);
        let s = self.spec.a_x() / (2.0 * PI).sqrt();
        v.iter_mut()
            .zip(&self.x_phase)
            .for_each(|(c, ph)| *c *= ph * s);
        Ok(())
    }

    pub fn inverse_x_1d(&self, v: &mut [Complex64]) -> Result<()> {
        self.check(v.len(), self.spec.nx)?;
        v.iter_mut()
            .zip(&self.x_phase)
            .for_each(|(c, ph)| *c *= ph.conj());
        self.x_inv.process(v);
        let s = self.spec.dp() / (2.0 * PI).sqrt();
        v.iter_mut().for_each(|c| *c *= s);
        Ok(())
    }

    fn columns(&self, data: &mut [Complex64], inverse: bool) -> Result<()> {
        let (nt, nx) = (self.spec.nt, self.spec.nx);
        self.check(data.len(), nt * nx)?;
        let mut col = vec![Complex64::default(); nt];
        for x in 0..nx {
            for t in 0..nt {
                col[t] = data[t * nx + x];
            }
            if inverse {
                self.inverse_t_1d(&mut col)?;
            } else {
                self.forward_t_1d(&mut col)?;
            }
            for t in 0..nt {
                data[t * nx + x] = col[t];
            }
        }
        Ok(())
    }

    fn rows(&self, data: &mut [Complex64], inverse: bool) -> Result<()> {
        let (nt, nx) = (self.spec.nt, self.spec.nx);
        self.check(data.len(), nt * nx)?;
        for row in data.chunks_exact_mut(nx) {
            if inverse {
                self.inverse_x_1d(row)?;
            } else {
                self.forward_x_1d(row)?;
            }
        }
        Ok(())
    }

    /// Partial transform in `t`; layout `[n][x]`.
    pub fn forward_t(&self, data: &mut [Complex64]) -> Result<()> {
        self.columns(data, false)
    }

    pub fn inverse_t(&self, data: &mut [Complex64]) -> Result<()> {
        self.columns(data, true)
    }

    /// Partial transform in `x`; layout `[t][j]`.
    pub fn forward_x(&self, data: &mut [Complex64]) -> Result<()> {
        self.rows(data, false)
    }

    pub fn inverse_x(&self, data: &mut [Complex64]) -> Result<()> {
        self.rows(data, true)
    }

    /// Full transform; layout `[n][j]`.
    pub fn forward(&self, data: &mut [Complex64]) -> Result<()> {
        self.rows(data, false)?;
        self.columns(data, false)
    }

    pub fn inverse(&self, data: &mut [Complex64]) -> Result<()> {
        self.columns(data, true)?;
        self.rows(data, true)
    }
}

fn complexify(values: &[f64]) -> Vec<Complex64> {
    values.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

/// Partial Fourier transform in time of a real lattice array.
pub fn fourier_t(spec: &LatticeSpec, values: &[f64]) -> Result<Vec<Complex64>> {
    let mut data = complexify(values);
    FourierPlan::new(*spec).forward_t(&mut data)?;
    Ok(data)
}

pub fn inverse_fourier_t(spec: &LatticeSpec, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut data = coeffs.to_vec();
    FourierPlan::new(*spec).inverse_t(&mut data)?;
    Ok(data)
}

/// Partial Fourier transform in space of a real lattice array.
pub fn fourier_x(spec: &LatticeSpec, values: &[f64]) -> Result<Vec<Complex64>> {
    let mut data = complexify(values);
    FourierPlan::new(*spec).forward_x(&mut data)?;
    Ok(data)
}

pub fn inverse_fourier_x(spec: &LatticeSpec, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut data = coeffs.to_vec();
    FourierPlan::new(*spec).inverse_x(&mut data)?;
    Ok(data)
}

/// Matsubara coefficients of a single time profile of length `n_t`.
pub fn fourier_t_profile(spec: &LatticeSpec, g: &[f64]) -> Result<Vec<Complex64>> {
    let mut v = complexify(g);
    FourierPlan::new(*spec).forward_t_1d(&mut v)?;
    Ok(v)
}

/// Momentum coefficients of a single spatial profile of length `n_x`.
pub fn fourier_x_profile(spec: &LatticeSpec, h: &[f64]) -> Result<Vec<Complex64>> {
    let mut v = complexify(h);
    FourierPlan::new(*spec).forward_x_1d(&mut v)?;
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Time,
    Space,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MollifierKind {
    Time,
    Space,
}

/// Lattice sampling of an approximate Dirac delta.
#[derive(Debug, Clone, PartialEq)]
pub struct Mollifier {
    pub kind: MollifierKind,
    pub k: usize,
    pub center: f64,
    values: Vec<f64>,
}

impl Mollifier {
    pub fn profile(&self) -> &[f64] {
        &self.values
    }

    /// `δ_k(· - center) ⊗ h` (time kind) or `g ⊗ δ_k(· - center)` (space kind).
    pub fn tensor_with(&self, spec: LatticeSpec, other: &[f64]) -> Result<TestFunction> {
        match self.kind {
            MollifierKind::Time => TestFunction::tensor(spec, &self.values, other),
            MollifierKind::Space => TestFunction::tensor(spec, other, &self.values),
        }
    }
}

/// Normalized cubic B-spline on `[-2, 2]`.
pub fn cubic_bspline(u: f64) -> f64 {
    let a = u.abs();
    if a < 1.0 {
        (4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0
    } else if a < 2.0 {
        let b = 2.0 - a;
        b * b * b / 6.0
    } else {
        0.0
    }
}

/// Builds `δ_k`. Time kind: `β^{-1} Σ_{|n|≤k} e^{iν_n(s - center)}`, where for
/// `k = n_t/2` the two Nyquist terms coincide on the lattice and each carries
/// weight 1/2, reproducing the lattice delta `a_t^{-1}`. Space kind:
/// `k·χ(k(x - center))` with χ the cubic B-spline, renormalized so that
/// `Σ a_x δ_k = 1`.
pub fn make_mollifier(
    spec: &LatticeSpec,
    kind: MollifierKind,
    k: usize,
    center: f64,
) -> Result<Mollifier> {
    let values = match kind {
        MollifierKind::Time => {
            if k > spec.nt / 2 {
                return Err(Error::OutOfRange {
                    what: "mollifier cutoff",
                    detail: format!("k = {k} exceeds n_t/2 = {}", spec.nt / 2),
                });
            }
            (0..spec.nt)
                .map(|tk| {
                    let s = spec.time_coord(tk) - center;
                    let w = 2.0 * PI / spec.beta;
                    let mut sum = 1.0;
                    for n in 1..=k {
                        let weight = if 2 * n == spec.nt { 0.5 } else { 1.0 };
                        sum += 2.0 * weight * (w * n as f64 * s).cos();
                    }
                    sum / spec.beta
                })
                .collect()
        }
        MollifierKind::Space => {
            if k == 0 {
                return Err(Error::OutOfRange {
                    what: "mollifier cutoff",
                    detail: "space kind needs k >= 1".into(),
                });
            }
            let half_width = 2.0 / k as f64;
            if half_width >= spec.length {
                return Err(Error::OutOfRange {
                    what: "mollifier support",
                    detail: format!("support radius {half_width} does not fit in box half-length {}", spec.length),
                });
            }
            let box_len = 2.0 * spec.length;
            let raw: Vec<f64> = (0..spec.nx)
                .map(|i| {
                    let d = (spec.space_coord(i) - center + spec.length).rem_euclid(box_len) - spec.length;
                    k as f64 * cubic_bspline(k as f64 * d)
                })
                .collect();
            let mass: f64 = raw.iter().sum::<f64>() * spec.a_x();
            if mass <= 0.0 {
                return Err(Error::OutOfRange {
                    what: "mollifier support",
                    detail: "bump contains no lattice site; refine the lattice".into(),
                });
            }
            raw.into_iter().map(|v| v / mass).collect()
        }
    };
    Ok(Mollifier {
        kind,
        k,
        center,
        values,
    })
}

/// Sobolev norm `(Σ |ĝ|² (ω² + m²)^s · weight)^{1/2}` of a single-variable
/// function on the time circle (ω = ν_n) or the spatial line (ω = p_j, weight Δp).
pub fn sobolev_norm(spec: &LatticeSpec, axis: Axis, values: &[f64], order: f64) -> Result<f64> {
    let supported = [-1.0, -0.5, 0.5];
    if !supported.iter().any(|s| (s - order).abs() < 1e-15) {
        return Err(Error::UnsupportedOrder(order));
    }
    let m2 = spec.mass * spec.mass;
    let sum: f64 = match axis {
        Axis::Time => {
            let g = fourier_t_profile(spec, values)?;
            g.iter()
                .enumerate()
                .map(|(k, c)| c.norm_sqr() * (spec.matsubara(k).powi(2) + m2).powf(order))
                .sum()
        }
        Axis::Space => {
            let g = fourier_x_profile(spec, values)?;
            g.iter()
                .enumerate()
                .map(|(j, c)| c.norm_sqr() * (spec.momentum(j).powi(2) + m2).powf(order) * spec.dp())
                .sum()
        }
    };
    Ok(sum.sqrt())
}

/// Spectral evolution of the lattice Klein–Gordon equation
/// `∂²φ = ∂ₓ²φ - m²φ` from Cauchy data `(φ₀, π₀)` on the spatial lattice.
/// Each momentum mode is rotated exactly with `ε(p) = (p² + m²)^{1/2}`.
/// Returns `(φ_t, ∂_tφ_t)`.
pub fn kg_evolve(spec: &LatticeSpec, phi0: &[f64], pi0: &[f64], t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if pi0.len() != phi0.len() {
        return Err(Error::ShapeMismatch {
            expected: phi0.len(),
            got: pi0.len(),
        });
    }
    let plan = FourierPlan::new(*spec);
    let mut phi = complexify(phi0);
    let mut pi = complexify(pi0);
    plan.forward_x_1d(&mut phi)?;
    plan.forward_x_1d(&mut pi)?;
    for j in 0..spec.nx {
        let eps = (spec.momentum(j).powi(2) + spec.mass * spec.mass).sqrt();
        let (s, c) = (eps * t).sin_cos();
        let (p0, q0) = (phi[j], pi[j]);
        phi[j] = p0 * c + q0 * (s / eps);
        pi[j] = -p0 * (eps * s) + q0 * c;
    }
    plan.inverse_x_1d(&mut phi)?;
    plan.inverse_x_1d(&mut pi)?;
    Ok((phi.iter().map(|c| c.re).collect(), pi.iter().map(|c| c.re).collect()))
}

/// Discrete symplectic form `σ(h₁, h₂) = Σ (φ₁π₂ - π₁φ₂) a_x` on Cauchy data.
pub fn symplectic_form(spec: &LatticeSpec, h1: (&[f64], &[f64]), h2: (&[f64], &[f64])) -> f64 {
    let (phi1, pi1) = h1;
    let (phi2, pi2) = h2;
    let s: f64 = (0..phi1.len())
        .map(|i| phi1[i] * pi2[i] - pi1[i] * phi2[i])
        .sum();
    s * spec.a_x()
}

/// Klein–Gordon energy density `½(π² + (∂ₓφ)² + m²φ²)` with a spectral derivative.
pub fn kg_energy_density(spec: &LatticeSpec, phi: &[f64], pi: &[f64]) -> Result<Vec<f64>> {
    let plan = FourierPlan::new(*spec);
    let mut d = complexify(phi);
    plan.forward_x_1d(&mut d)?;
    for (j, c) in d.iter_mut().enumerate() {
        let p = if 2 * j == spec.nx { 0.0 } else { spec.momentum(j) };
        *c *= Complex64::new(0.0, p);
    }
    plan.inverse_x_1d(&mut d)?;
    let m2 = spec.mass * spec.mass;
    Ok((0..phi.len())
        .map(|i| 0.5 * (pi[i] * pi[i] + d[i].re * d[i].re + m2 * phi[i] * phi[i]))
        .collect())
}
