//! Compressed sparse row matrices over `f64` and `Complex64`.

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;
use rayon::prelude::*;

/// Entry type of a [`Csr`] matrix.
pub trait Scalar: ComplexField<RealField = f64> + Copy + Default + Send + Sync {
    fn into_complex(self) -> Complex64;
}

impl Scalar for f64 {
    fn into_complex(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
}

impl Scalar for Complex64 {
    fn into_complex(self) -> Complex64 {
        self
    }
}

// Below this many rows a serial matvec beats the thread pool.
const PAR_ROWS: usize = 4096;

/// Square sparse matrix; column indices within a row are sorted and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    /// Builds from per-row entry lists. Duplicates are summed and exact zeros
    /// dropped.
    pub fn from_rows(dim: usize, rows: Vec<Vec<(usize, T)>>) -> Self {
        assert_eq!(rows.len(), dim, "one entry list per row");
        let mut indptr = Vec::with_capacity(dim + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                assert!(col < dim, "column {col} out of range");
                let mut v = row[k].1;
                k += 1;
                while k < row.len() && row[k].0 == col {
                    v += row[k].1;
                    k += 1;
                }
                if v != T::zero() {
                    indices.push(col);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Csr { dim, indptr, indices, data }
    }

    /// Builds from per-column entry lists `(row, value)`.
    pub fn from_columns(dim: usize, cols: Vec<Vec<(usize, T)>>) -> Self {
        assert_eq!(cols.len(), dim, "one entry list per column");
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); dim];
        for (j, col) in cols.into_iter().enumerate() {
            for (i, v) in col {
                rows[i].push((j, v));
            }
        }
        Self::from_rows(dim, rows)
    }

    pub fn diagonal(d: &[T]) -> Self {
        let rows = d.iter().enumerate().map(|(i, &v)| vec![(i, v)]).collect();
        Self::from_rows(d.len(), rows)
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![T::one(); dim])
    }

    pub fn zeros(dim: usize) -> Self {
        Csr {
            dim,
            indptr: vec![0; dim + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.data[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.data[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn diagonal_entries(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    fn row_dot<S: Scalar>(&self, i: usize, x: &[S], lift: impl Fn(T) -> S) -> S {
        let mut acc = S::zero();
        for k in self.indptr[i]..self.indptr[i + 1] {
            acc += lift(self.data[k]) * x[self.indices[k]];
        }
        acc
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        assert!(x.len() == self.dim && y.len() == self.dim);
        if self.dim >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x, |v| v));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x, |v| v);
            }
        }
    }

    /// `y = A x` on complex vectors.
    pub fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert!(x.len() == self.dim && y.len() == self.dim);
        if self.dim >= PAR_ROWS {
            y.par_iter_mut().enumerate().for_each(|(i, yi)| *yi = self.row_dot(i, x, T::into_complex));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = self.row_dot(i, x, T::into_complex);
            }
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out
    }

    /// `self + other`.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let rows = (0..self.dim).map(|i| self.row(i).chain(other.row(i)).collect()).collect();
        Self::from_rows(self.dim, rows)
    }

    /// `self + c·Id`.
    pub fn shifted(&self, c: T) -> Self {
        self.add(&Self::diagonal(&vec![c; self.dim]))
    }

    pub fn adjoint(&self) -> Self {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); self.dim];
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                rows[j].push((i, v.conjugate()));
            }
        }
        Self::from_rows(self.dim, rows)
    }

    /// `max |A_ij - conj(A_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i).conjugate()).modulus());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.modulus()).fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn to_dense_complex(&self) -> DMatrix<Complex64> {
        self.to_dense().map(T::into_complex)
    }

    pub fn to_complex(&self) -> Csr<Complex64> {
        Csr {
            dim: self.dim,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: self.data.iter().map(|v| v.into_complex()).collect(),
        }
    }

    /// Principal submatrix on the given (sorted) index set.
    pub fn restrict(&self, idx: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let rows = idx
            .iter()
            .map(|&i| self.row(i).filter(|(j, _)| pos[*j] != usize::MAX).map(|(j, v)| (pos[j], v)).collect())
            .collect();
        Self::from_rows(idx.len(), rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assembly_sums_duplicates_and_drops_zeros() {
        let a = Csr::from_rows(2, vec![vec![(1, 1.0), (0, 2.0), (1, 0.5)], vec![(0, 0.0)]]);
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 1.5);
        assert_eq!(a.get(1, 0), 0.0);
    }

    #[test]
    fn columns_and_rows_agree() {
        let cols = vec![vec![(0, 1.0), (2, 3.0)], vec![(1, 4.0)], vec![(0, 3.0)]];
        let a = Csr::from_columns(3, cols);
        assert_eq!(a.get(2, 0), 3.0);
        assert_eq!(a.get(0, 2), 3.0);
        assert_eq!(a.hermiticity_defect(), 0.0);
        let mut y = vec![0.0; 3];
        a.apply(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![4.0, 4.0, 3.0]);
    }

    #[test]
    fn complex_adjoint() {
        let i = Complex64::new(0.0, 1.0);
        let a = Csr::from_rows(2, vec![vec![(1, i)], vec![(0, -i)]]);
        assert_eq!(a.hermiticity_defect(), 0.0);
        assert_eq!(a.adjoint(), a);
        let b = Csr::from_rows(2, vec![vec![(1, i)], vec![(0, i)]]);
        assert!((b.hermiticity_defect() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn restrict_and_shift() {
        let a = Csr::from_rows(3, vec![vec![(0, 1.0), (2, 2.0)], vec![(1, 5.0)], vec![(0, 2.0), (2, 3.0)]]);
        let r = a.restrict(&[0, 2]);
        assert_eq!(r.to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
        assert_eq!(a.shifted(1.0).get(1, 1), 6.0);
    }
}
