//! The heat equation `dU(x, s)/dx = -(H + iλR(x)) U(x, s)` along the spatial
//! axis, its time-ordered products, the interval operators
//! `W_{[a,b]}(f) = U(b, a)*`, and the series in `λ`.
//!
//! `R(x) = Σ_k w_k(x) A_k` may carry smooth profiles and impulses
//! `w δ(x - x_k) A`; an impulse contributes the unitary factor `e^{-iλwA}`
//! (for real `λ`). Impulses are how a lattice test function, a sum of
//! `a_x δ(x - x_i)` in space, drives the propagator. Kicks are taken on the
//! half-open interval `[s, t)`, so `U(t, r) U(r, s) = U(t, s)` holds exactly
//! at kick positions too.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FockError, Result};
use crate::krylov::{expm_hermitian, lanczos_lowest};
use crate::operators::{ComplexOperator, RealOperator};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);
const I: C = C::new(0.0, 1.0);

pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `w(x) A` for `x` in `support`, zero outside.
#[derive(Clone)]
pub struct SmoothTerm {
    pub op: Arc<ComplexOperator>,
    pub profile: Profile,
    pub support: (f64, f64),
}

/// `weight · δ(x - x0) · op`.
#[derive(Clone)]
pub struct Kick {
    pub x: f64,
    pub weight: f64,
    pub op: Arc<ComplexOperator>,
}

/// The drive `x ↦ R(x)`.
#[derive(Clone, Default)]
pub struct Drive {
    smooth: Vec<SmoothTerm>,
    kicks: Vec<Kick>,
}

impl fmt::Debug for Drive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Drive")
            .field("smooth_supports", &self.smooth.iter().map(|t| t.support).collect::<Vec<_>>())
            .field("kicks", &self.kicks.iter().map(|k| (k.x, k.weight)).collect::<Vec<_>>())
            .finish()
    }
}

impl Drive {
    pub fn zero() -> Self {
        Drive::default()
    }

    pub fn smooth(op: Arc<ComplexOperator>, profile: Profile, support: (f64, f64)) -> Self {
        Drive {
            smooth: vec![SmoothTerm { op, profile, support }],
            kicks: Vec::new(),
        }
    }

    pub fn impulses(mut kicks: Vec<Kick>) -> Self {
        kicks.sort_by(|a, b| a.x.total_cmp(&b.x));
        Drive { smooth: Vec::new(), kicks }
    }

    pub fn combine(&self, other: &Drive) -> Drive {
        let mut out = self.clone();
        out.smooth.extend(other.smooth.iter().cloned());
        out.kicks.extend(other.kicks.iter().cloned());
        out.kicks.sort_by(|a, b| a.x.total_cmp(&b.x));
        out
    }

    /// `x ↦ R(x - dx)`.
    pub fn shifted(&self, dx: f64) -> Drive {
        Drive {
            smooth: self
                .smooth
                .iter()
                .map(|t| {
                    let p = t.profile.clone();
                    SmoothTerm {
                        op: t.op.clone(),
                        profile: Arc::new(move |x| p(x - dx)),
                        support: (t.support.0 + dx, t.support.1 + dx),
                    }
                })
                .collect(),
            kicks: self.kicks.iter().map(|k| Kick { x: k.x + dx, ..k.clone() }).collect(),
        }
    }

    /// `x ↦ s R(x)`.
    pub fn scaled(&self, s: f64) -> Drive {
        Drive {
            smooth: self
                .smooth
                .iter()
                .map(|t| {
                    let p = t.profile.clone();
                    SmoothTerm {
                        op: t.op.clone(),
                        profile: Arc::new(move |x| s * p(x)),
                        support: t.support,
                    }
                })
                .collect(),
            kicks: self.kicks.iter().map(|k| Kick { weight: s * k.weight, ..k.clone() }).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.smooth.is_empty() && self.kicks.is_empty()
    }

    pub fn has_kicks(&self) -> bool {
        !self.kicks.is_empty()
    }

    pub fn has_smooth(&self) -> bool {
        !self.smooth.is_empty()
    }

    pub fn kicks(&self) -> &[Kick] {
        &self.kicks
    }

    fn smooth_hull(&self) -> Option<(f64, f64)> {
        self.smooth.iter().map(|t| t.support).reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }

    /// Smallest interval containing every smooth support and kick.
    pub fn support(&self) -> Option<(f64, f64)> {
        let kicks = self.kicks.iter().map(|k| (k.x, k.x));
        self.smooth_hull().into_iter().chain(kicks).reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }

    fn operators(&self) -> impl Iterator<Item = &Arc<ComplexOperator>> {
        self.smooth.iter().map(|t| &t.op).chain(self.kicks.iter().map(|k| &k.op))
    }

    /// `out += factor · R(x) v` over the smooth terms.
    fn add_smooth(&self, x: f64, factor: C, v: &[C], out: &mut [C], tmp: &mut [C]) {
        for t in &self.smooth {
            if x < t.support.0 || x > t.support.1 {
                continue;
            }
            let w = (t.profile)(x);
            if w == 0.0 {
                continue;
            }
            t.op.apply_complex(v, tmp);
            let f = factor * w;
            for (o, y) in out.iter_mut().zip(tmp.iter()) {
                *o += f * y;
            }
        }
    }

    /// Dense `R(x)` from the smooth terms.
    pub fn dense_at(&self, x: f64, dim: usize) -> DMatrix<C> {
        let mut m = DMatrix::zeros(dim, dim);
        for t in &self.smooth {
            if x >= t.support.0 && x <= t.support.1 {
                m += t.op.matrix().to_dense() * C::new((t.profile)(x), 0.0);
            }
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Dormand–Prince 5(4) where smooth terms are active, Krylov
    /// exponentials elsewhere and for kicks.
    AdaptiveOde,
    /// Strang steps `e^{-hH/2} e^{-iλhR(mid)} e^{-hH/2}` with Krylov
    /// exponentials, for problems too stiff for the explicit stepper.
    Splitting { steps_per_unit: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub steps: usize,
    pub rejected: usize,
    pub matvecs: usize,
    pub kicks: usize,
    pub tol: f64,
}

impl SolveStats {
    fn merge(&mut self, o: &SolveStats) {
        self.steps += o.steps;
        self.rejected += o.rejected;
        self.matvecs += o.matvecs;
        self.kicks += o.kicks;
    }
}

/// Result of a propagation: the matrix `U(t, s)` or its action on a vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorResult<T> {
    pub value: T,
    pub s: f64,
    pub t: f64,
    pub method: Method,
    pub stats: SolveStats,
}

/// `H` (positive semidefinite), the drive `R`, and the coupling `λ`.
#[derive(Debug, Clone)]
pub struct PropagatorProblem {
    pub h: Arc<RealOperator>,
    pub drive: Drive,
    pub lambda: C,
    pub tol: f64,
    pub method: Method,
    pub max_steps: usize,
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    35.0 / 384.0 - 5179.0 / 57600.0,
    0.0,
    500.0 / 1113.0 - 7571.0 / 16695.0,
    125.0 / 192.0 - 393.0 / 640.0,
    -2187.0 / 6784.0 + 92097.0 / 339200.0,
    11.0 / 84.0 - 187.0 / 2100.0,
    -1.0 / 40.0,
];

fn norm(v: &[C]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn inner(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Direction of traversal: forward solves `U(t, s)`, the adjoint traversal
/// applies `U(t, s)*`, which runs from `t` down to `s` with `λ → -conj(λ)`.
#[derive(Clone, Copy)]
struct Traversal {
    s: f64,
    t: f64,
    adjoint: bool,
    lambda: C,
}

impl Traversal {
    fn pos(&self, y: f64) -> f64 {
        if self.adjoint {
            self.t - y
        } else {
            self.s + y
        }
    }

    fn param(&self, x: f64) -> f64 {
        if self.adjoint {
            self.t - x
        } else {
            x - self.s
        }
    }
}

impl PropagatorProblem {
    pub fn new(h: Arc<RealOperator>, drive: Drive, lambda: C) -> Result<Self> {
        for op in drive.operators() {
            if op.dim() != h.dim() {
                return Err(FockError::DimensionMismatch(op.dim(), h.dim()));
            }
        }
        Ok(PropagatorProblem {
            h,
            drive,
            lambda,
            tol: 1e-10,
            method: Method::AdaptiveOde,
            max_steps: 2_000_000,
        })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_method(mut self, method: Method) -> Self {
        self.method = method;
        self
    }

    pub fn with_lambda(&self, lambda: C) -> Self {
        PropagatorProblem { lambda, ..self.clone() }
    }

    pub fn with_drive(&self, drive: Drive) -> Self {
        PropagatorProblem { drive, ..self.clone() }
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// Lowest eigenvalue of `H`; errors below `-1e-10`.
    pub fn check_positive(&self) -> Result<f64> {
        let min = if self.dim() <= 1500 {
            self.h.matrix().to_dense().symmetric_eigenvalues().min()
        } else {
            lanczos_lowest(|x, y| self.h.apply(x, y), self.dim(), 1, 1e-10, 2000)?.values[0]
        };
        if min < -1e-10 {
            return Err(FockError::Unsupported(format!("H is not positive: lowest eigenvalue {min}")));
        }
        Ok(min)
    }

    fn krylov_tol(&self) -> f64 {
        self.tol.min(1e-12)
    }

    fn free(&self, v: &[C], tau: f64, stats: &mut SolveStats) -> Result<Vec<C>> {
        if tau == 0.0 {
            return Ok(v.to_vec());
        }
        let (u, st) = expm_hermitian(|x, y| self.h.apply_complex(x, y), v, C::new(-tau, 0.0), self.krylov_tol())?;
        stats.matvecs += st.matvecs;
        Ok(u)
    }

    fn kick(&self, v: &[C], k: &Kick, lambda: C, stats: &mut SolveStats) -> Result<Vec<C>> {
        let (u, st) = expm_hermitian(|x, y| k.op.apply_complex(x, y), v, -I * lambda * k.weight, self.krylov_tol())?;
        stats.matvecs += st.matvecs;
        stats.kicks += 1;
        Ok(u)
    }

    fn rhs(&self, tr: &Traversal, y: f64, v: &[C], out: &mut [C], tmp: &mut [C]) {
        self.h.apply_complex(v, out);
        for o in out.iter_mut() {
            *o = -*o;
        }
        self.drive.add_smooth(tr.pos(y), -I * tr.lambda, v, out, tmp);
    }

    fn dp45(&self, tr: &Traversal, v: Vec<C>, y0: f64, y1: f64, stats: &mut SolveStats) -> Result<Vec<C>> {
        let dim = v.len();
        let scale0 = norm(&v).max(1e-300);
        let mut y = y0;
        let mut psi = v;
        let mut tmp = vec![ZERO; dim];
        let mut k: Vec<Vec<C>> = vec![vec![ZERO; dim]; 7];
        let mut stage = vec![ZERO; dim];
        self.rhs(tr, y, &psi, &mut k[0], &mut tmp);
        stats.matvecs += 1;
        let mut h = (y1 - y0).min(0.05);
        let mut steps = 0usize;
        while y < y1 {
            if y + h > y1 {
                h = y1 - y;
            }
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = psi[i];
                    for (j, kj) in k.iter().enumerate().take(s) {
                        let a = DP_A[s][j];
                        if a != 0.0 {
                            acc += kj[i] * (h * a);
                        }
                    }
                    stage[i] = acc;
                }
                let (done, rest) = k.split_at_mut(s);
                let _ = done;
                self.rhs(tr, y + DP_C[s] * h, &stage, &mut rest[0], &mut tmp);
                stats.matvecs += 1;
            }
            // stage holds the 5th-order solution (row 7 of the tableau).
            let mut err = 0.0;
            for i in 0..dim {
                let mut e = ZERO;
                for (j, kj) in k.iter().enumerate() {
                    e += kj[i] * DP_E[j];
                }
                err += (e * h).norm_sqr();
            }
            let scale = scale0.max(norm(&stage));
            let ratio = err.sqrt() / (self.tol * scale);
            if ratio <= 1.0 {
                y += h;
                std::mem::swap(&mut psi, &mut stage);
                k.swap(0, 6);
                stats.steps += 1;
            } else {
                stats.rejected += 1;
            }
            steps += 1;
            let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
            if h < 1e-13 * y1.abs().max(1.0) || steps > self.max_steps {
                return Err(FockError::StepUnderflow { x: tr.pos(y), h });
            }
        }
        Ok(psi)
    }

    fn strang(&self, tr: &Traversal, v: Vec<C>, y0: f64, y1: f64, per_unit: usize, stats: &mut SolveStats) -> Result<Vec<C>> {
        let n = (((y1 - y0) * per_unit as f64).ceil() as usize).max(1);
        let h = (y1 - y0) / n as f64;
        let mut psi = v;
        for j in 0..n {
            let mid = tr.pos(y0 + (j as f64 + 0.5) * h);
            psi = self.free(&psi, h / 2.0, stats)?;
            let drive = &self.drive;
            let lam = tr.lambda;
            let apply = |x: &[C], out: &mut [C]| {
                let mut tmp = vec![ZERO; x.len()];
                out.iter_mut().for_each(|o| *o = ZERO);
                drive.add_smooth(mid, C::new(1.0, 0.0), x, out, &mut tmp);
            };
            let (u, st) = expm_hermitian(apply, &psi, -I * lam * h, self.krylov_tol())?;
            stats.matvecs += st.matvecs;
            psi = self.free(&u, h / 2.0, stats)?;
            stats.steps += 1;
        }
        Ok(psi)
    }

    fn propagate(&self, v: &[C], s: f64, t: f64, adjoint: bool) -> Result<(Vec<C>, SolveStats)> {
        if !(s <= t) {
            return Err(FockError::InvalidInterval { s, t });
        }
        if v.len() != self.dim() {
            return Err(FockError::DimensionMismatch(v.len(), self.dim()));
        }
        let tr = Traversal {
            s,
            t,
            adjoint,
            lambda: if adjoint { -self.lambda.conj() } else { self.lambda },
        };
        let len = t - s;
        let mut stats = SolveStats {
            tol: self.tol,
            ..Default::default()
        };

        // Kicks on [s, t), visited in traversal order.
        let mut kicks: Vec<(f64, usize)> = self
            .drive
            .kicks
            .iter()
            .enumerate()
            .filter(|(_, k)| k.x >= s && k.x < t)
            .map(|(i, k)| (tr.param(k.x), i))
            .collect();
        if adjoint {
            kicks.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        } else {
            kicks.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        let hull = self.drive.smooth_hull().and_then(|(lo, hi)| {
            let (lo, hi) = (lo.max(s), hi.min(t));
            (lo < hi).then(|| {
                let (a, b) = (tr.param(lo), tr.param(hi));
                (a.min(b), a.max(b))
            })
        });

        let mut breaks: Vec<f64> = vec![0.0, len];
        breaks.extend(kicks.iter().map(|k| k.0));
        if let Some((a, b)) = hull {
            breaks.push(a);
            breaks.push(b);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        let mut psi = v.to_vec();
        let mut next_kick = 0;
        for w in breaks.windows(2) {
            let (y0, y1) = (w[0], w[1]);
            while next_kick < kicks.len() && kicks[next_kick].0 <= y0 {
                psi = self.kick(&psi, &self.drive.kicks[kicks[next_kick].1], tr.lambda, &mut stats)?;
                next_kick += 1;
            }
            let active = hull.is_some_and(|(a, b)| {
                let mid = 0.5 * (y0 + y1);
                mid > a && mid < b
            });
            psi = if active {
                match self.method {
                    Method::AdaptiveOde => self.dp45(&tr, psi, y0, y1, &mut stats)?,
                    Method::Splitting { steps_per_unit } => self.strang(&tr, psi, y0, y1, steps_per_unit, &mut stats)?,
                }
            } else {
                self.free(&psi, y1 - y0, &mut stats)?
            };
        }
        while next_kick < kicks.len() {
            psi = self.kick(&psi, &self.drive.kicks[kicks[next_kick].1], tr.lambda, &mut stats)?;
            next_kick += 1;
        }
        Ok((psi, stats))
    }

    /// `U(t, s) v`.
    pub fn apply_u(&self, s: f64, t: f64, v: &[C]) -> Result<PropagatorResult<Vec<C>>> {
        let (value, stats) = self.propagate(v, s, t, false)?;
        Ok(PropagatorResult {
            value,
            s,
            t,
            method: self.method,
            stats,
        })
    }

    /// `U(t, s)* v`.
    pub fn apply_u_adjoint(&self, s: f64, t: f64, v: &[C]) -> Result<PropagatorResult<Vec<C>>> {
        let (value, stats) = self.propagate(v, s, t, true)?;
        Ok(PropagatorResult {
            value,
            s,
            t,
            method: self.method,
            stats,
        })
    }

    /// `(u, W_{[a,b]} v) = (U(b, a) u, v)`.
    pub fn w_element(&self, u: &[C], a: f64, b: f64, v: &[C]) -> Result<C> {
        let uu = self.apply_u(a, b, u)?.value;
        Ok(inner(&uu, v))
    }
}

/// `U(t, s)` as a dense matrix, column by column in parallel.
pub fn solve_u(problem: &PropagatorProblem, s: f64, t: f64) -> Result<PropagatorResult<DMatrix<C>>> {
    let dim = problem.dim();
    let cols: Vec<Result<(Vec<C>, SolveStats)>> = (0..dim)
        .into_par_iter()
        .map(|j| {
            let mut e = vec![ZERO; dim];
            e[j] = C::new(1.0, 0.0);
            problem.propagate(&e, s, t, false)
        })
        .collect();
    let mut m = DMatrix::zeros(dim, dim);
    let mut stats = SolveStats {
        tol: problem.tol,
        ..Default::default()
    };
    for (j, c) in cols.into_iter().enumerate() {
        let (col, st) = c?;
        stats.merge(&st);
        for (i, v) in col.into_iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(PropagatorResult {
        value: m,
        s,
        t,
        method: problem.method,
        stats,
    })
}

/// `W_{[a,b]} = U(b, a)*` as a dense matrix.
pub fn w_interval(problem: &PropagatorProblem, a: f64, b: f64) -> Result<DMatrix<C>> {
    Ok(solve_u(problem, a, b)?.value.adjoint())
}

fn dense_exp_hermitian(m: &DMatrix<C>, z: C) -> DMatrix<C> {
    let eig = SymmetricEigen::new(m.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| (z * e).exp()));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// `Π_{j=n-1..0} (e^{-ΔH/p} e^{-iλΔR(x_j)/p})^p` with `Δ = (t-s)/n` and
/// left points `x_j = s + jΔ`. Requires real `λ` and a smooth drive.
pub fn trotter_u(problem: &PropagatorProblem, s: f64, t: f64, n: usize, p: usize) -> Result<DMatrix<C>> {
    if problem.lambda.im != 0.0 {
        return Err(FockError::Unsupported("time-ordered products need real lambda".into()));
    }
    if problem.drive.has_kicks() {
        return Err(FockError::Unsupported("impulsive drives have no pointwise R(x)".into()));
    }
    if n == 0 || p == 0 || !(s <= t) {
        return Err(FockError::InvalidInterval { s, t });
    }
    let dim = problem.dim();
    let delta = (t - s) / n as f64;
    let h = problem.h.matrix().to_dense_complex();
    let free = dense_exp_hermitian(&h, C::new(-delta / p as f64, 0.0));
    let mut u = DMatrix::<C>::identity(dim, dim);
    for j in 0..n {
        let r = problem.drive.dense_at(s + j as f64 * delta, dim);
        let kick = dense_exp_hermitian(&r, -I * problem.lambda * (delta / p as f64));
        let step = &free * kick;
        let mut f = DMatrix::<C>::identity(dim, dim);
        for _ in 0..p {
            f = &step * f;
        }
        u = f * u;
    }
    Ok(u)
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<C>) -> f64 {
    m.clone().singular_values().max()
}

/// Dense spectral data of `H` used by the series routines.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Spectral {
    pub fn new(h: &RealOperator) -> Self {
        let eig = SymmetricEigen::new(h.matrix().to_dense());
        Spectral {
            energies: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    fn to_eigen(&self, v: &[C]) -> Vec<C> {
        let n = v.len();
        (0..n)
            .into_par_iter()
            .map(|k| (0..n).map(|i| v[i] * self.vectors[(i, k)]).sum())
            .collect()
    }

    fn from_eigen(&self, c: &[C]) -> Vec<C> {
        let n = c.len();
        (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|k| c[k] * self.vectors[(i, k)]).sum())
            .collect()
    }

    /// `e^{-τH} v`.
    pub fn evolve(&self, v: &[C], tau: f64) -> Vec<C> {
        if tau == 0.0 {
            return v.to_vec();
        }
        let mut c = self.to_eigen(v);
        for (ck, e) in c.iter_mut().zip(&self.energies) {
            *ck *= (-tau * e).exp();
        }
        self.from_eigen(&c)
    }
}

fn apply_power_series(op: &ComplexOperator, coeff: C, v: &[C], order: usize) -> Vec<Vec<C>> {
    // [v, (cA)v/1!, (cA)²v/2!, ...]
    let mut out = vec![v.to_vec()];
    let mut y = vec![ZERO; v.len()];
    for j in 1..=order {
        op.apply_complex(&out[j - 1], &mut y);
        out.push(y.iter().map(|x| x * coeff / j as f64).collect());
    }
    out
}

/// `(bra, T_m)` for `m = 0..=n`, where `Σ_m μ^m T_m` expands
/// `e^{-(end - x_last)H} Π_k [e^{μ c w_k A_k} e^{-(x_k - x_{k-1})H}] e^{-(x_1 - start)H} ket`
/// over the kicks of an impulsive drive, all of which must lie in `[start, end)`.
pub fn impulse_moments(spectral: &Spectral, drive: &Drive, bra: &[C], ket: &[C], start: f64, end: f64, n: usize, c: C) -> Result<Vec<C>> {
    if drive.has_smooth() {
        return Err(FockError::Unsupported("impulse expansion of a smooth drive".into()));
    }
    if !(start <= end) {
        return Err(FockError::InvalidInterval { s: start, t: end });
    }
    if let Some(k) = drive.kicks.iter().find(|k| k.x < start || k.x >= end) {
        return Err(FockError::Unsupported(format!("kick at {} outside [{start}, {end})", k.x)));
    }
    let mut t: Vec<Vec<C>> = (0..=n).map(|m| if m == 0 { ket.to_vec() } else { vec![ZERO; ket.len()] }).collect();
    let mut x_prev = start;
    let evolve_all = |t: &mut Vec<Vec<C>>, tau: f64| {
        for (m, tm) in t.iter_mut().enumerate() {
            // Higher orders stay zero until the first kick.
            if m == 0 || tm.iter().any(|z| *z != ZERO) {
                *tm = spectral.evolve(tm, tau);
            }
        }
    };
    for k in &drive.kicks {
        evolve_all(&mut t, k.x - x_prev);
        x_prev = k.x;
        for m in (1..=n).rev() {
            let mut acc = t[m].clone();
            for j in 1..=m {
                let terms = apply_power_series(&k.op, c * k.weight, &t[m - j], j);
                for (a, b) in acc.iter_mut().zip(&terms[j]) {
                    *a += b;
                }
            }
            t[m] = acc;
        }
    }
    evolve_all(&mut t, end - x_prev);
    Ok(t.iter().map(|tm| inner(bra, tm)).collect())
}

fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // Newton on P_n with the standard asymptotic initial guess.
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, z);
                for k in 2..=n {
                    let q2 = ((2 * k - 1) as f64 * z * q1 - (k - 1) as f64 * q0) / k as f64;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = n as f64 * (z * q1 - q0) / (z * z - 1.0);
                w[i] = 2.0 / ((1.0 - z * z) * dq * dq);
                break;
            }
        }
        x[i] = z;
    }
    (x, w)
}

fn nodes_on(lo: f64, hi: f64, gl: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    let half = 0.5 * (hi - lo);
    gl.0.iter().zip(&gl.1).map(|(x, w)| (lo + half * (x + 1.0), half * w)).collect()
}

/// Ordered integral `∫_{x_1 ≤ … ≤ x_n} (Ω, R(x_n) e^{-(x_n - x_{n-1})H} … R(x_1) Ω)`
/// by nested Gauss–Legendre quadrature over the smooth hull, `n ≤ 3`.
fn smooth_ordered_integral(drive: &Drive, spectral: &Spectral, omega: &[C], n: usize, q: usize) -> Vec<C> {
    let (lo, hi) = drive.smooth_hull().expect("smooth drive");
    let gl = gauss_legendre(q);
    let dim = omega.len();
    let r_omega = |x: f64| -> Vec<C> {
        let mut out = vec![ZERO; dim];
        let mut tmp = vec![ZERO; dim];
        drive.add_smooth(x, C::new(1.0, 0.0), omega, &mut out, &mut tmp);
        out
    };
    let in_eigen = |v: &[C]| spectral.to_eigen(v);
    let mut result = vec![C::new(1.0, 0.0)];
    let outer = nodes_on(lo, hi, &gl);
    // (R(x)Ω) in the eigenbasis at every outer node, reused as the bra.
    let bras: Vec<Vec<C>> = outer.iter().map(|&(x, _)| in_eigen(&r_omega(x))).collect();
    let ket_at = |x: f64| in_eigen(&r_omega(x));

    // n = 1
    let i1: C = outer.iter().map(|&(x, w)| inner(omega, &r_omega(x)) * w).sum();
    result.push(i1);
    if n == 1 {
        return result;
    }

    // inner(x): Σ_{x' ≤ x} w' e^{-(x - x')E} (R(x')Ω)^ (eigen coefficients)
    let propagated = |x: f64, ket: &dyn Fn(f64) -> Vec<C>| -> Vec<C> {
        let mut acc = vec![ZERO; dim];
        for (xp, wp) in nodes_on(lo, x, &gl) {
            let k = ket(xp);
            for (a, (kv, e)) in acc.iter_mut().zip(k.iter().zip(&spectral.energies)) {
                *a += kv * (wp * (-(x - xp) * e).exp());
            }
        }
        acc
    };
    let i2: C = outer
        .iter()
        .zip(&bras)
        .map(|(&(x, w), bra)| inner(bra, &propagated(x, &ket_at)) * w)
        .sum();
    result.push(i2);
    if n == 2 {
        return result;
    }

    // n = 3: the middle ket is R(x2) applied to the propagated first ket.
    let middle = |x2: f64| -> Vec<C> {
        let c = propagated(x2, &ket_at);
        let v = spectral.from_eigen(&c);
        let mut out = vec![ZERO; dim];
        let mut tmp = vec![ZERO; dim];
        drive.add_smooth(x2, C::new(1.0, 0.0), &v, &mut out, &mut tmp);
        in_eigen(&out)
    };
    let i3: C = outer
        .iter()
        .zip(&bras)
        .map(|(&(x, w), bra)| inner(bra, &propagated(x, &middle)) * w)
        .sum();
    result.push(i3);
    result
}

fn check_vacuum(problem: &PropagatorProblem, omega: &[C]) -> Result<()> {
    let mut y = vec![ZERO; omega.len()];
    problem.h.apply_complex(omega, &mut y);
    let r = norm(&y);
    if r > 1e-8 {
        return Err(FockError::Unsupported(format!("Ω is not annihilated by H (‖HΩ‖ = {r:.2e}); use H_C^ren")));
    }
    Ok(())
}

pub const QUADRATURE_NODES: usize = 48;

fn ordered_terms(problem: &PropagatorProblem, omega: &[C], n: usize, c: C) -> Result<Vec<C>> {
    if n > 3 {
        return Err(FockError::Unsupported(format!("ordered integrals of dimension {n} > 3 are refused")));
    }
    check_vacuum(problem, omega)?;
    let drive = &problem.drive;
    if drive.is_zero() {
        let mut v = vec![ZERO; n + 1];
        v[0] = inner(omega, omega);
        return Ok(v);
    }
    if drive.has_kicks() && drive.has_smooth() {
        return Err(FockError::Unsupported("mixed smooth and impulsive drives".into()));
    }
    let spectral = Spectral::new(&problem.h);
    if drive.has_kicks() {
        // HΩ = 0, so the span between the kicks is all that matters.
        let first = drive.kicks[0].x;
        let last = drive.kicks[drive.kicks.len() - 1].x;
        let t = impulse_moments(&spectral, drive, omega, omega, first, last + 1e-9 * (1.0 + last.abs()), n, c)?;
        // Σ_m μ^m T_m: the m-th derivative is m!·(Ω, T_m).
        let mut fact = 1.0;
        return Ok(t
            .into_iter()
            .enumerate()
            .map(|(m, v)| {
                if m > 0 {
                    fact *= m as f64;
                }
                v * fact
            })
            .collect());
    }
    let ints = smooth_ordered_integral(drive, &spectral, omega, n, QUADRATURE_NODES);
    let mut fact = 1.0;
    let mut cp = C::new(1.0, 0.0);
    Ok(ints
        .into_iter()
        .enumerate()
        .map(|(m, v)| {
            if m > 0 {
                fact *= m as f64;
                cp *= c;
            }
            v * fact * cp
        })
        .collect())
}

/// `d^n/dλ^n (Ω, U_λ Ω)` at `λ = 0`:
/// `n! (-i)^n ∫_{x_1≤…≤x_n} (Ω, R(x_n) e^{-(x_n-x_{n-1})H} … R(x_1) Ω)`.
/// `H` must annihilate `Ω` (pass `H^ren` and its ground state), `n ≤ 3`.
/// Impulsive drives are summed exactly, smooth ones by nested quadrature.
pub fn lambda_derivatives(problem: &PropagatorProblem, omega: &[C], n: usize) -> Result<C> {
    Ok(ordered_terms(problem, omega, n, -I)?[n])
}

/// `n! ∫_{x_1≤…≤x_n} (Ω, R(x_n) e^{-(x_n-x_{n-1})H} … R(x_1) Ω)`, whose real
/// part is the `n`-th moment of `φ(f)` when `R(x) = φ_F(f_x)`.
pub fn moment_formula(problem: &PropagatorProblem, omega: &[C], n: usize) -> Result<C> {
    Ok(ordered_terms(problem, omega, n, C::new(1.0, 0.0))?[n])
}

/// `(Ω, U_λ(hi, lo) Ω)` over the drive support.
pub fn vacuum_amplitude(problem: &PropagatorProblem, omega: &[C]) -> Result<C> {
    let Some((lo, hi)) = problem.drive.support() else {
        return Ok(inner(omega, omega));
    };
    // Kicks sit on [lo, hi); widen so the last one is included.
    let u = problem.apply_u(lo, hi + 1e-9 * (1.0 + hi.abs()), omega)?.value;
    Ok(inner(omega, &u))
}

/// Central finite differences of `λ ↦ (Ω, U_λ Ω)` at 0 with one Richardson
/// extrapolation, `n ∈ {1, 2}`.
pub fn lambda_derivative_fd(problem: &PropagatorProblem, omega: &[C], n: usize, h: f64) -> Result<C> {
    let f = |l: f64| vacuum_amplitude(&problem.with_lambda(C::new(l, 0.0)), omega);
    let d = |h: f64| -> Result<C> {
        match n {
            1 => Ok((f(h)? - f(-h)?) / (2.0 * h)),
            2 => Ok((f(h)? - f(0.0)? * 2.0 + f(-h)?) / (h * h)),
            _ => Err(FockError::Unsupported(format!("finite differences of order {n}"))),
        }
    };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

/// `d^n/dλ^n (Ω, U_λ Ω)` at 0 by the trapezoid rule on the Cauchy circle
/// `|λ| = radius` with `points` nodes. The amplitude is entire in `λ`, so
/// the error falls like `radius^points` times its Taylor coefficients.
pub fn lambda_derivative_contour(problem: &PropagatorProblem, omega: &[C], n: usize, radius: f64, points: usize) -> Result<C> {
    if points <= n {
        return Err(FockError::Unsupported(format!("{points} contour points cannot resolve order {n}")));
    }
    let values: Vec<Result<C>> = (0..points)
        .into_par_iter()
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
            let lam = C::from_polar(radius, theta);
            Ok(vacuum_amplitude(&problem.with_lambda(lam), omega)? * C::from_polar(1.0, -(n as f64) * theta))
        })
        .collect();
    let mut acc = ZERO;
    for v in values {
        acc += v?;
    }
    let fact: f64 = (1..=n).map(|k| k as f64).product();
    Ok(acc * fact / (points as f64 * radius.powi(n as i32)))
}

/// Value of `(Ω, U^∞ Ω)` at two box sizes, `support ± 10/gap` and two units
/// wider, for a vector `omega` that need not be an eigenvector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfiniteLimit {
    pub re: f64,
    pub im: f64,
    pub half_width: f64,
    pub change: f64,
}

pub fn infinite_interval(problem: &PropagatorProblem, bra: &[C], ket: &[C], gap: f64) -> Result<InfiniteLimit> {
    if !(gap > 0.0) {
        return Err(FockError::NoGap(gap));
    }
    let (lo, hi) = problem.drive.support().unwrap_or((0.0, 0.0));
    let pad = 10.0 / gap;
    let at = |extra: f64| -> Result<C> {
        let u = problem.apply_u(lo - pad - extra, hi + pad + extra, ket)?.value;
        Ok(inner(bra, &u))
    };
    let v1 = at(0.0)?;
    let v2 = at(2.0)?;
    Ok(InfiniteLimit {
        re: v2.re,
        im: v2.im,
        half_width: 0.5 * (hi - lo) + pad + 2.0,
        change: (v2 - v1).norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterPoint {
    pub t: f64,
    pub lhs: f64,
    pub bound: f64,
    pub radius: f64,
}

/// `|(Ω, U^∞(R_1 + ξ_t R_2) Ω) - (Ω, U^∞(R_1) Ω)(Ω, U^∞(R_2) Ω)|` against
/// `e^{-(|t| - 2T) a}`, where `R_1, R_2` live in `[-T, T]` and `a` is the gap
/// of `problem.h` (which must annihilate `Ω`).
pub fn clustering_bound(problem: &PropagatorProblem, omega: &[C], r1: &Drive, r2: &Drive, t: f64, gap: f64) -> Result<ClusterPoint> {
    if !(gap > 0.0) {
        return Err(FockError::NoGap(gap));
    }
    check_vacuum(problem, omega)?;
    let radius = [r1.support(), r2.support()]
        .iter()
        .flatten()
        .map(|(lo, hi)| lo.abs().max(hi.abs()))
        .fold(0.0, f64::max);
    let amp = |d: &Drive| vacuum_amplitude(&problem.with_drive(d.clone()), omega);
    let joint = amp(&r1.combine(&r2.shifted(t)))?;
    let lhs = (joint - amp(r1)? * amp(r2)?).norm();
    Ok(ClusterPoint {
        t,
        lhs,
        bound: (-(t.abs() - 2.0 * radius) * gap).exp(),
        radius,
    })
}
