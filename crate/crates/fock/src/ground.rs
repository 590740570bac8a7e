//! Ground state, gap and low spectrum of `H_C`.

use std::collections::BTreeMap;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::basis::FockBasis;
use crate::error::{FockError, Result};
use crate::krylov::lanczos_lowest;
use crate::operators::RealOperator;

/// Largest dimension diagonalized densely by default.
pub const DENSE_LIMIT: usize = 1500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigenMethod {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub dense_limit: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            dense_limit: DENSE_LIMIT,
            tol: 1e-10,
            max_iter: 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundState {
    pub energy: f64,
    /// Unit vector with positive overlap on the Fock vacuum.
    pub vector: Vec<f64>,
    /// Second distinct eigenvalue minus `energy`.
    pub gap: f64,
    pub method: EigenMethod,
    pub iterations: usize,
}

impl GroundState {
    pub fn vacuum_overlap(&self) -> f64 {
        self.vector[0]
    }

    pub fn vector_complex(&self) -> Vec<num_complex::Complex64> {
        self.vector.iter().map(|&x| num_complex::Complex64::new(x, 0.0)).collect()
    }
}

fn dense_sorted(h: &RealOperator) -> (Vec<f64>, nalgebra::DMatrix<f64>) {
    let eig = SymmetricEigen::new(h.matrix().to_dense());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = nalgebra::DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn ground_state(h: &RealOperator) -> Result<GroundState> {
    ground_state_with(h, EigenOptions::default())
}

/// Lowest eigenpair of `H_C`, by dense diagonalization up to
/// `dense_limit` and Lanczos above.
pub fn ground_state_with(h: &RealOperator, opts: EigenOptions) -> Result<GroundState> {
    let dim = h.dim();
    let (energy, second, mut vector, method, iterations) = if dim <= opts.dense_limit {
        let (values, vectors) = dense_sorted(h);
        let second = values.get(1).copied().unwrap_or(f64::INFINITY);
        (values[0], second, vectors.column(0).iter().copied().collect::<Vec<f64>>(), EigenMethod::Dense, 0)
    } else {
        let pairs = lanczos_lowest(|x, y| h.apply(x, y), dim, 2, opts.tol, opts.max_iter)?;
        let second = pairs.values.get(1).copied().unwrap_or(f64::INFINITY);
        (pairs.values[0], second, pairs.vectors[0].clone(), EigenMethod::Lanczos, pairs.iterations)
    };
    if vector[0] < 0.0 {
        vector.iter_mut().for_each(|x| *x = -*x);
    }
    Ok(GroundState {
        energy,
        vector,
        gap: second - energy,
        method,
        iterations,
    })
}

/// `H_C^ren = H_C - E_C`.
pub fn renormalized(h: &RealOperator, gs: &GroundState) -> RealOperator {
    h.shifted(-gs.energy, "H_C^ren")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumLine {
    pub index: usize,
    pub energy: f64,
    pub momentum: f64,
}

/// Basis states grouped by total momentum label, reduced mod `nodes` when
/// given (the sectors `H_C` preserves under an aliasing quadrature).
pub fn momentum_sectors(basis: &FockBasis, nodes: Option<usize>) -> BTreeMap<i64, Vec<usize>> {
    let mut sectors: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for s in 0..basis.dim() {
        let p = basis.momentum_label(s);
        let key = match nodes {
            Some(n) => {
                let n = n as i64;
                let r = p.rem_euclid(n);
                if 2 * r > n {
                    r - n
                } else {
                    r
                }
            }
            None => p,
        };
        sectors.entry(key).or_default().push(s);
    }
    sectors
}

/// The `count` lowest levels of `H_C` with their circle momentum
/// `2πp/β`, computed sector by sector. Sectors above `dense_limit` use
/// Lanczos, which resolves a degenerate level within one sector only once.
pub fn low_spectrum(h: &RealOperator, basis: &FockBasis, count: usize, nodes: Option<usize>) -> Result<Vec<SpectrumLine>> {
    if h.dim() != basis.dim() {
        return Err(FockError::DimensionMismatch(h.dim(), basis.dim()));
    }
    let beta = basis.spec().beta;
    let mut lines = Vec::new();
    for (p, states) in momentum_sectors(basis, nodes) {
        let block = RealOperator::new("sector", h.matrix().restrict(&states))?;
        let values: Vec<f64> = if block.dim() <= DENSE_LIMIT {
            dense_sorted(&block).0.into_iter().take(count).collect()
        } else {
            let k = count.min(block.dim());
            lanczos_lowest(|x, y| block.apply(x, y), block.dim(), k, 1e-10, 3000)?.values
        };
        let momentum = 2.0 * std::f64::consts::PI * p as f64 / beta;
        lines.extend(values.into_iter().map(|energy| SpectrumLine { index: 0, energy, momentum }));
    }
    lines.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    lines.truncate(count);
    for (i, l) in lines.iter_mut().enumerate() {
        l.index = i;
    }
    Ok(lines)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::FockBasisSpec;
    use crate::operators::{build_free, build_vc, default_nodes, hamiltonian};
    use approx::assert_abs_diff_eq;
    use pphi2_core::WickPolynomial;

    #[test]
    fn free_ground_state() {
        let b = FockBasis::new(FockBasisSpec::new(1.0, 0.7, 2, 3).unwrap()).unwrap();
        let gs = ground_state(&build_free(&b)).unwrap();
        assert_abs_diff_eq!(gs.energy, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(gs.gap, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(gs.vacuum_overlap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lanczos_and_dense_agree() {
        let b = FockBasis::new(FockBasisSpec::new(1.0, 1.0, 1, 8).unwrap()).unwrap();
        let poly = WickPolynomial::new(vec![0.0, 0.0, 0.0, 0.0, 0.2], 0.0);
        let h = hamiltonian(&build_free(&b), &build_vc(&b, &poly, default_nodes(4, 1)).unwrap()).unwrap();
        let dense = ground_state(&h).unwrap();
        let lanczos = ground_state_with(
            &h,
            EigenOptions {
                dense_limit: 0,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(lanczos.method, EigenMethod::Lanczos);
        assert_abs_diff_eq!(dense.energy, lanczos.energy, epsilon = 1e-10);
        assert_abs_diff_eq!(dense.gap, lanczos.gap, epsilon = 1e-8);
        let overlap: f64 = dense.vector.iter().zip(&lanczos.vector).map(|(a, b)| a * b).sum();
        assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-8);
        assert!(dense.vacuum_overlap() > 0.0);
    }

    #[test]
    fn free_spectrum_with_momenta() {
        let b = FockBasis::new(FockBasisSpec::new(1.0, 1.0, 1, 2).unwrap()).unwrap();
        let lines = low_spectrum(&build_free(&b), &b, 4, None).unwrap();
        assert_eq!(lines.len(), 4);
        assert_abs_diff_eq!(lines[0].energy, 0.0);
        assert_abs_diff_eq!(lines[1].energy, 1.0);
        assert_abs_diff_eq!(lines[2].energy, 2.0);
        let one = b.b()[2];
        assert_abs_diff_eq!(lines[3].energy, one, epsilon = 1e-12);
        assert_abs_diff_eq!(lines[3].momentum.abs(), 2.0 * std::f64::consts::PI, epsilon = 1e-12);
    }
}
