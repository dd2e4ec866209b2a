//! Compressed sparse row matrices.
//!
//! Integer incidence matrices and real operators share the same storage; rows
//! keep their column indices sorted and free of explicit zeros.

use std::io::{self, Write};
use std::ops::{Add, Mul, Neg, Sub};

use ndarray::Array2;

/// Scalar types that can live in a [`Csr`].
pub trait Scalar:
    Copy
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + std::fmt::Debug
{
    fn zero() -> Self;
    fn one() -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for i64 {
    fn zero() -> Self {
        0
    }
    fn one() -> Self {
        1
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Csr<T> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Csr<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Csr { nrows, ncols, indptr: vec![0; nrows + 1], indices: Vec::new(), data: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![T::one(); n])
    }

    pub fn diag(values: &[T]) -> Self {
        Self::from_triplets(values.len(), values.len(), values.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    /// Builds a matrix from (row, col, value) triplets. Duplicates are summed
    /// and resulting zeros dropped.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); nrows];
        for (i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let col = row[k].0;
                let mut acc = row[k].1;
                k += 1;
                while k < row.len() && row[k].0 == col {
                    acc = acc + row[k].1;
                    k += 1;
                }
                if acc != T::zero() {
                    indices.push(col);
                    data.push(acc);
                }
            }
            indptr.push(indices.len());
        }
        Csr { nrows, ncols, indptr, indices, data }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row_indices(&self, i: usize) -> &[usize] {
        &self.indices[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn row_values(&self, i: usize) -> &[T] {
        &self.data[self.indptr[i]..self.indptr[i + 1]]
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        self.row_indices(i).iter().copied().zip(self.row_values(i).iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        match self.row_indices(i).binary_search(&j) {
            Ok(k) => self.data[self.indptr[i] + k],
            Err(_) => T::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.is_empty()
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut data = vec![T::zero(); self.nnz()];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let slot = next[j];
                indices[slot] = i;
                data[slot] = v;
                next[j] += 1;
            }
        }
        Csr { nrows: self.ncols, ncols: self.nrows, indptr, indices, data }
    }

    /// Sparse product `self * other` (row-by-row accumulation).
    pub fn matmul(&self, other: &Csr<T>) -> Csr<T> {
        assert_eq!(self.ncols, other.nrows, "matmul shape mismatch");
        let mut acc = vec![T::zero(); other.ncols];
        let mut seen = vec![usize::MAX; other.ncols];
        let mut pattern = Vec::new();
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut data = Vec::new();
        for i in 0..self.nrows {
            pattern.clear();
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    if seen[j] != i {
                        seen[j] = i;
                        acc[j] = T::zero();
                        pattern.push(j);
                    }
                    acc[j] = acc[j] + a * b;
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                if acc[j] != T::zero() {
                    indices.push(j);
                    data.push(acc[j]);
                }
            }
            indptr.push(indices.len());
        }
        Csr { nrows: self.nrows, ncols: other.ncols, indptr, indices, data }
    }

    pub fn add(&self, other: &Csr<T>) -> Csr<T> {
        assert_eq!(self.shape(), other.shape(), "add shape mismatch");
        Csr::from_triplets(self.nrows, self.ncols, self.triplets().chain(other.triplets()))
    }

    pub fn scale(&self, s: T) -> Csr<T> {
        self.map(|v| v * s)
    }

    /// `diag(left) * self * diag(right)`.
    pub fn scale_rows_cols(&self, left: Option<&[T]>, right: Option<&[T]>) -> Csr<T> {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in out.indptr[i]..out.indptr[i + 1] {
                let j = out.indices[k];
                let mut v = out.data[k];
                if let Some(l) = left {
                    v = l[i] * v;
                }
                if let Some(r) = right {
                    v = v * r[j];
                }
                out.data[k] = v;
            }
        }
        out
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Csr<U> {
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Submatrix on the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Csr<T> {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (new, &old) in cols.iter().enumerate() {
            col_map[old] = new;
        }
        let trips = rows.iter().enumerate().flat_map(|(ni, &oi)| {
            let col_map = &col_map;
            self.row(oi).filter_map(move |(j, v)| {
                let nj = col_map[j];
                (nj != usize::MAX).then_some((ni, nj, v))
            })
        });
        Csr::from_triplets(rows.len(), cols.len(), trips.collect::<Vec<_>>())
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.ncols, "matvec length mismatch");
        (0..self.nrows)
            .map(|i| self.row(i).fold(T::zero(), |acc, (j, v)| acc + v * x[j]))
            .collect()
    }

    /// `selfᵀ x` without forming the transpose.
    pub fn matvec_t(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.nrows, "matvec_t length mismatch");
        let mut y = vec![T::zero(); self.ncols];
        for i in 0..self.nrows {
            let xi = x[i];
            for (j, v) in self.row(i) {
                y[j] = y[j] + v * xi;
            }
        }
        y
    }

    pub fn to_f64(&self) -> Csr<f64> {
        self.map(|v| v.to_f64())
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.nrows, self.ncols));
        for (i, j, v) in self.triplets() {
            out[[i, j]] = v.to_f64();
        }
        out
    }
}

impl Csr<f64> {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Largest absolute asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        self.add(&t.scale(-1.0)).max_abs()
    }

    /// Writes MatrixMarket coordinate text.
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (i, j, v) in self.triplets() {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
        Ok(())
    }

    /// Sparse times dense.
    pub fn matmul_dense(&self, b: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.ncols, b.nrows(), "matmul_dense shape mismatch");
        let mut out = Array2::zeros((self.nrows, b.ncols()));
        for i in 0..self.nrows {
            let mut row = out.row_mut(i);
            for (j, v) in self.row(i) {
                row.scaled_add(v, &b.row(j));
            }
        }
        out
    }

    pub fn from_dense(a: &Array2<f64>) -> Csr<f64> {
        let (n, m) = a.dim();
        let trips = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).filter_map(|(i, j)| {
            let v = a[[i, j]];
            (v != 0.0).then_some((i, j, v))
        });
        Csr::from_triplets(n, m, trips.collect::<Vec<_>>())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
