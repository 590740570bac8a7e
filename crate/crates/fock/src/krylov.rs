//! Lanczos eigensolver and Krylov exponentials for Hermitian operators.
//!
//! Both keep the full Krylov basis and reorthogonalize twice per step, so
//! there are no spurious copies of converged Ritz values. A degenerate
//! eigenvalue is found once; the second Ritz value is the next distinct level.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{FockError, Result};

const START_SEED: u64 = 0x4c41_4e43;

#[derive(Debug, Clone)]
pub struct EigenPairs {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn cnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn tridiagonal_eigen(alpha: &[f64], beta: &[f64]) -> SymmetricEigen<f64, nalgebra::Dyn> {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    SymmetricEigen::new(t)
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Lowest `k` eigenpairs of a real symmetric operator given by its action.
/// Converged when every wanted residual `β_m |s_{m,i}|` is below
/// `tol·max(1, |θ_i|)`.
pub fn lanczos_lowest(
    apply: impl Fn(&[f64], &mut [f64]),
    dim: usize,
    k: usize,
    tol: f64,
    max_iter: usize,
) -> Result<EigenPairs> {
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    let mut q: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n0 = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= n0);

    let max_iter = max_iter.min(dim);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let mut scale: f64 = 0.0;

    for m in 0..max_iter {
        apply(&q, &mut w);
        let a = dot(&q, &w);
        alpha.push(a);
        for (wi, qi) in w.iter_mut().zip(&q) {
            *wi -= a * qi;
        }
        if let (Some(prev), Some(&b)) = (basis.last(), beta.last()) {
            for (wi, pi) in w.iter_mut().zip(prev as &Vec<f64>) {
                *wi -= b * pi;
            }
        }
        basis.push(q.clone());
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
        }
        let b = dot(&w, &w).sqrt();
        scale = scale.max(a.abs()).max(b);
        let breakdown = b <= 1e-13 * scale.max(1.0);
        let size = m + 1;
        let last = breakdown || size == max_iter;
        if size >= k && (size % 5 == 0 || last) {
            let eig = tridiagonal_eigen(&alpha, &beta);
            let order = sorted_order(eig.eigenvalues.as_slice());
            let want = k.min(size);
            let residuals: Vec<f64> = order[..want]
                .iter()
                .map(|&i| if breakdown { 0.0 } else { b * eig.eigenvectors[(size - 1, i)].abs() })
                .collect();
            let converged = order[..want]
                .iter()
                .zip(&residuals)
                .all(|(&i, r)| *r <= tol * eig.eigenvalues[i].abs().max(1.0));
            if converged || last {
                if !converged {
                    return Err(FockError::NoConvergence { iterations: size });
                }
                let mut values = Vec::with_capacity(want);
                let mut vectors = Vec::with_capacity(want);
                for &i in &order[..want] {
                    values.push(eig.eigenvalues[i]);
                    let mut v = vec![0.0; dim];
                    for (j, bj) in basis.iter().enumerate() {
                        let c = eig.eigenvectors[(j, i)];
                        for (vi, x) in v.iter_mut().zip(bj) {
                            *vi += c * x;
                        }
                    }
                    let n = dot(&v, &v).sqrt();
                    v.iter_mut().for_each(|x| *x /= n);
                    vectors.push(v);
                }
                return Ok(EigenPairs {
                    values,
                    vectors,
                    residuals,
                    iterations: size,
                });
            }
        }
        beta.push(b);
        q = w.iter().map(|x| x / b).collect();
    }
    Err(FockError::NoConvergence { iterations: max_iter })
}

/// Statistics of a Krylov exponential.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KrylovStats {
    pub substeps: usize,
    pub matvecs: usize,
}

const KRYLOV_MAX: usize = 40;

/// `e^{zA} v` for Hermitian `A` given by its action, with `z` complex.
///
/// The Lanczos relation `A Q_m = Q_m T_m + β_m q_{m+1} e_mᵀ` gives the
/// a-posteriori error `β_m |[e^{zτT_m} e_1]_m| ‖v‖` for a fraction `τ` of
/// the step; the step is halved until that is below `tol·‖v‖`.
pub fn expm_hermitian(
    apply: impl Fn(&[Complex64], &mut [Complex64]),
    v: &[Complex64],
    z: Complex64,
    tol: f64,
) -> Result<(Vec<Complex64>, KrylovStats)> {
    let dim = v.len();
    let mut stats = KrylovStats::default();
    let mut u = v.to_vec();
    let mut remaining = 1.0;
    let mut w = vec![Complex64::new(0.0, 0.0); dim];
    while remaining > 0.0 {
        let un = cnorm(&u);
        if un == 0.0 {
            break;
        }
        let mut basis: Vec<Vec<Complex64>> = vec![u.iter().map(|x| x / un).collect()];
        let mut alpha = Vec::new();
        let mut beta = Vec::new();
        let mut b_last = 0.0;
        for m in 0..KRYLOV_MAX.min(dim) {
            apply(&basis[m], &mut w);
            stats.matvecs += 1;
            let a = cdot(&basis[m], &w).re;
            alpha.push(a);
            for _ in 0..2 {
                for bv in &basis {
                    let c = cdot(bv, &w);
                    for (wi, x) in w.iter_mut().zip(bv) {
                        *wi -= c * x;
                    }
                }
            }
            let b = cnorm(&w);
            b_last = b;
            if b <= 1e-13 * a.abs().max(1.0) || m + 1 == KRYLOV_MAX.min(dim) {
                if b <= 1e-13 * a.abs().max(1.0) {
                    b_last = 0.0;
                }
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let eig = tridiagonal_eigen(&alpha, &beta);
        let m = alpha.len();
        let coeffs = |tau: f64| -> Vec<Complex64> {
            (0..m)
                .map(|r| {
                    (0..m)
                        .map(|i| {
                            let s = eig.eigenvectors[(0, i)];
                            (z * tau * eig.eigenvalues[i]).exp() * s * eig.eigenvectors[(r, i)]
                        })
                        .sum()
                })
                .collect()
        };
        let mut tau = remaining;
        let mut y = coeffs(tau);
        while b_last * y[m - 1].norm() > tol {
            tau *= 0.5;
            if tau < 1e-12 {
                return Err(FockError::NoConvergence { iterations: stats.matvecs });
            }
            y = coeffs(tau);
        }
        u = vec![Complex64::new(0.0, 0.0); dim];
        for (bv, c) in basis.iter().zip(&y) {
            for (ui, x) in u.iter_mut().zip(bv) {
                *ui += c * un * x;
            }
        }
        remaining -= tau;
        if remaining < 1e-15 {
            remaining = 0.0;
        }
        stats.substeps += 1;
    }
    Ok((u, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::Csr;

    fn laplacian(n: usize) -> Csr<f64> {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, 2.0)];
                if i > 0 {
                    r.push((i - 1, -1.0));
                }
                if i + 1 < n {
                    r.push((i + 1, -1.0));
                }
                r
            })
            .collect();
        Csr::from_rows(n, rows)
    }

    #[test]
    fn lanczos_matches_closed_form_spectrum() {
        let n = 200;
        let a = laplacian(n);
        let pairs = lanczos_lowest(|x, y| a.apply(x, y), n, 3, 1e-10, 400).unwrap();
        for (k, v) in pairs.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * (std::f64::consts::PI * (k + 1) as f64 / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-9, "{k}: {v} vs {exact}");
        }
        let mut y = vec![0.0; n];
        a.apply(&pairs.vectors[0], &mut y);
        let res: f64 = y.iter().zip(&pairs.vectors[0]).map(|(yi, vi)| (yi - pairs.values[0] * vi).powi(2)).sum();
        assert!(res.sqrt() < 1e-6);
    }

    #[test]
    fn lanczos_small_dimension_is_exact() {
        let a = Csr::diagonal(&[3.0, 1.0, 2.0]);
        let pairs = lanczos_lowest(|x, y| a.apply(x, y), 3, 2, 1e-12, 10).unwrap();
        assert!((pairs.values[0] - 1.0).abs() < 1e-12);
        assert!((pairs.values[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn krylov_exponential_matches_diagonal() {
        let d: Vec<f64> = (0..50).map(|i| i as f64 * 0.7).collect();
        let a = Csr::diagonal(&d).to_complex();
        let v: Vec<Complex64> = (0..50).map(|i| Complex64::new(1.0, i as f64 * 0.1)).collect();
        for z in [Complex64::new(-1.5, 0.0), Complex64::new(0.0, -2.0), Complex64::new(-0.3, 0.8)] {
            let (u, _) = expm_hermitian(|x, y| a.apply_complex(x, y), &v, z, 1e-13).unwrap();
            for i in 0..50 {
                let exact = (z * d[i]).exp() * v[i];
                assert!((u[i] - exact).norm() < 1e-10, "z={z} i={i}");
            }
        }
    }
}
