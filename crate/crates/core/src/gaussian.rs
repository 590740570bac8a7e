//! Sampling the Gaussian measure `dφ_C`.
//!
//! A sample is `φ = F⁻¹( M^{1/2} · F(ξ / (a_t a_x)^{1/2}) )` with `ξ` i.i.d.
//! standard normal per site and `F` the full lattice transform. Since `M` is
//! even under `(n, j) → (-n, -j)` and the Nyquist indices are self-conjugate,
//! the result is real up to rounding; the imaginary part is discarded. Each
//! orthonormal mode coefficient `(Δp)^{1/2} φ̂(n, j)` then has variance
//! `M(n, j)`.
//!
//! Sample `i` of a stream with seed `s` is drawn from ChaCha8 keyed by `s` on
//! stream `i`, so any sample is reproducible on its own and parallel runs give
//! bit-identical fields for any thread count.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::covariance::CovKernel;
use crate::error::{Error, Result};
use crate::lattice::{Field, FourierPlan, LatticeData, LatticeSpec, TestFunction};
use crate::stats::{self, Estimate};

pub const RNG_ALGORITHM: &str = "chacha8/seed_from_u64/stream=sample_index";

/// Reproducible source of free-field samples.
#[derive(Debug, Clone)]
pub struct SampleStream {
    spec: LatticeSpec,
    seed: u64,
    plan: FourierPlan,
    sqrt_m: Vec<f64>,
    noise_scale: f64,
}

impl SampleStream {
    pub fn new(kernel: &CovKernel, seed: u64) -> Self {
        let spec = *kernel.spec();
        SampleStream {
            spec,
            seed,
            plan: FourierPlan::new(spec),
            sqrt_m: kernel.multiplier().iter().map(|m| m.sqrt()).collect(),
            noise_scale: 1.0 / spec.cell().sqrt(),
        }
    }

    pub fn spec(&self) -> &LatticeSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng_algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Site noise of sample `index`.
    pub fn noise(&self, index: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        (0..self.spec.sites()).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    pub fn sample(&self, index: u64) -> Field {
        let noise = self.noise(index);
        let mut buf: Vec<Complex64> = noise.iter().map(|&x| Complex64::new(x * self.noise_scale, 0.0)).collect();
        self.plan.forward(&mut buf).expect("buffer sized from spec");
        for (c, s) in buf.iter_mut().zip(&self.sqrt_m) {
            *c *= s;
        }
        self.plan.inverse(&mut buf).expect("buffer sized from spec");
        Field::from_vec_unchecked(self.spec, buf.into_iter().map(|c| c.re).collect())
    }

    /// `f(i, φ_i)` for every sample index in `range`, evaluated in parallel and
    /// returned in index order.
    pub fn map<T, F>(&self, range: std::ops::Range<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64, &Field) -> T + Sync + Send,
    {
        range.into_par_iter().map(|i| f(i, &self.sample(i))).collect()
    }

    /// Block-wise reduction: blocks of `block` consecutive samples are folded
    /// independently and merged in block order, so the result does not depend
    /// on scheduling.
    pub fn reduce_blocks<A, I, F, M>(&self, n: u64, block: u64, init: I, fold: F, merge: M) -> A
    where
        A: Send,
        I: Fn() -> A + Sync + Send,
        F: Fn(&mut A, u64, &Field) + Sync + Send,
        M: Fn(&mut A, A),
    {
        let block = block.max(1);
        let n_blocks = n.div_ceil(block);
        let parts: Vec<A> = (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let mut acc = init();
                for i in b * block..((b + 1) * block).min(n) {
                    fold(&mut acc, i, &self.sample(i));
                }
                acc
            })
            .collect();
        let mut total = init();
        for p in parts {
            merge(&mut total, p);
        }
        total
    }
}

/// `n` free-field samples drawn with the default (continuum) covariance.
pub fn sample_free(spec: &LatticeSpec, seed: u64, n: usize) -> Vec<Field> {
    let stream = SampleStream::new(&CovKernel::new(*spec), seed);
    stream.map(0..n as u64, |_, f| f.clone())
}

/// `∫ e^{iφ(f)} dφ_C = e^{-C(f,f)/2}`.
pub fn generating_functional_free(kernel: &CovKernel, f: &TestFunction) -> Result<f64> {
    Ok((-0.5 * kernel.quad(f, f)?).exp())
}

/// Monte Carlo estimate of `E[cos φ(f)]`, the real part of the generating
/// functional.
pub fn generating_functional_mc(stream: &SampleStream, f: &TestFunction, n: usize) -> Result<Estimate> {
    check_spec(stream, f)?;
    let v = stream.map(0..n as u64, |_, phi| f.pair_values(phi.values()).cos());
    Ok(stats::estimate(&v, stream.seed()))
}

/// `(p-1)!!`.
pub fn double_factorial_odd(p: u32) -> f64 {
    let mut acc = 1.0;
    let mut k = p as i64 - 1;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// Exact Gaussian moment: 0 for odd `p`, `(p-1)!! C(f,f)^{p/2}` for even `p`.
pub fn moment_free(kernel: &CovKernel, f: &TestFunction, p: u32) -> Result<f64> {
    if p == 0 {
        return Err(Error::Domain("moment order must be >= 1".into()));
    }
    if p % 2 == 1 {
        return Ok(0.0);
    }
    Ok(double_factorial_odd(p) * kernel.quad(f, f)?.powi(p as i32 / 2))
}

pub fn moment_mc(stream: &SampleStream, f: &TestFunction, p: u32, n: usize) -> Result<Estimate> {
    check_spec(stream, f)?;
    let v = stream.map(0..n as u64, |_, phi| f.pair_values(phi.values()).powi(p as i32));
    Ok(stats::estimate(&v, stream.seed()))
}

fn check_spec(stream: &SampleStream, f: &TestFunction) -> Result<()> {
    if f.spec() != stream.spec() {
        return Err(Error::SpecMismatch);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec() -> LatticeSpec {
        LatticeSpec::new(1.0, 3.0, 8, 12, 1.0).unwrap()
    }

    #[test]
    fn deterministic_samples() {
        let a = sample_free(&spec(), 42, 2);
        let b = sample_free(&spec(), 42, 2);
        assert_eq!(a, b);
        let c = sample_free(&spec(), 43, 1);
        assert_ne!(a[0], c[0]);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn samples_are_real_transforms() {
        // Imaginary residue of the inverse transform is pure rounding.
        let s = spec();
        let k = CovKernel::new(s);
        let stream = SampleStream::new(&k, 1);
        let plan = FourierPlan::new(s);
        let noise = stream.noise(0);
        let mut buf: Vec<Complex64> = noise.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        plan.forward(&mut buf).unwrap();
        for (c, m) in buf.iter_mut().zip(k.multiplier()) {
            *c *= m.sqrt();
        }
        plan.inverse(&mut buf).unwrap();
        assert!(buf.iter().all(|c| c.im.abs() < 1e-12));
    }

    #[test]
    fn moments_exact() {
        let s = spec();
        let k = CovKernel::new(s);
        let f = TestFunction::from_fn(s, |t, x| (-(x * x)).exp() * (1.0 + t)).unwrap();
        let c = k.quad(&f, &f).unwrap();
        assert_eq!(moment_free(&k, &f, 3).unwrap(), 0.0);
        assert_abs_diff_eq!(moment_free(&k, &f, 4).unwrap(), 3.0 * c * c, epsilon = 1e-14);
        assert_abs_diff_eq!(moment_free(&k, &f, 6).unwrap(), 15.0 * c * c * c, epsilon = 1e-13);
        assert!(moment_free(&k, &f, 0).is_err());
    }

    #[test]
    fn generating_functional_scaling() {
        let s = spec();
        let k = CovKernel::new(s);
        let f = TestFunction::from_fn(s, |t, x| (x - t).sin() * (-(x * x)).exp()).unwrap();
        assert_eq!(generating_functional_free(&k, &TestFunction::zeros(s)).unwrap(), 1.0);
        let g1 = -generating_functional_free(&k, &f).unwrap().ln();
        let g2 = -generating_functional_free(&k, &f.scaled(2.0)).unwrap().ln();
        assert_abs_diff_eq!(g2, 4.0 * g1, epsilon = 1e-12 * g2);
    }

    #[test]
    fn block_reduction_is_deterministic() {
        let s = spec();
        let stream = SampleStream::new(&CovKernel::new(s), 9);
        let run = || {
            stream.reduce_blocks(50, 7, || 0.0, |acc, _, phi| *acc += phi.get(0, 0), |a, b| *a += b)
        };
        assert_eq!(run(), run());
    }
}
