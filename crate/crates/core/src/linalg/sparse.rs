use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Scalar;
use crate::{Error, Result};

/// Square matrix in compressed row storage.
///
/// Column indices are sorted within each row and never repeated.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Builds a CSR matrix from raw arrays, checking every structural invariant.
    pub fn from_csr(
        n: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_offsets.len() != n + 1 {
            return Err(Error::Shape(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n + 1
            )));
        }
        if col_indices.len() != values.len() || row_offsets[n] != values.len() || row_offsets[0] != 0
        {
            return Err(Error::Shape("offsets do not match entry count".into()));
        }
        for r in 0..n {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return Err(Error::Shape(format!("row offsets decrease at row {r}")));
            }
            let cols = &col_indices[lo..hi];
            if cols.iter().any(|&c| c >= n) {
                return Err(Error::Shape(format!("column index out of range in row {r}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Shape(format!("row {r} is unsorted or has duplicates")));
            }
        }
        Ok(SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![T::ONE; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Mutable access to stored values; the sparsity pattern stays fixed.
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    /// Position of each diagonal entry in [`values`](Self::values), `None`
    /// where the pattern has no diagonal.
    pub fn diagonal_positions(&self) -> Vec<Option<usize>> {
        (0..self.n)
            .map(|r| {
                let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
                self.col_indices[lo..hi].binary_search(&r).ok().map(|k| lo + k)
            })
            .collect()
    }

    /// Iterates over `(col, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        self.col_indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        match self.col_indices[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => T::ZERO,
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::ZERO; self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn mul_vec_into(&self, x: &[T], out: &mut [T]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = T::ZERO;
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            *o = acc;
        }
    }

    /// Computes `A^T x` (plain transpose, no conjugation).
    pub fn mul_vec_transposed(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut out = vec![T::ZERO; self.n];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                out[c] += v * xr;
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut b = TripletBuilder::new(self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                b.add(c, r, v);
            }
        }
        b.build()
    }

    /// `‖A x − b‖∞`
    pub fn residual_inf(&self, x: &[T], b: &[T]) -> f64 {
        self.mul_vec(x)
            .iter()
            .zip(b)
            .map(|(&ax, &bi)| (ax - bi).modulus())
            .fold(0.0, f64::max)
    }

    /// `‖A^T x − b‖∞`
    pub fn residual_transposed_inf(&self, x: &[T], b: &[T]) -> f64 {
        self.mul_vec_transposed(x)
            .iter()
            .zip(b)
            .map(|(&ax, &bi)| (ax - bi).modulus())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v))
    }
}

/// Coordinate-format accumulator; duplicate entries are summed on `build`.
#[derive(Debug, Clone)]
pub struct TripletBuilder<T> {
    n: usize,
    entries: Vec<(usize, usize, T)>,
}

impl<T: Scalar> TripletBuilder<T> {
    pub fn new(n: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn add(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row < self.n && col < self.n);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> SparseMatrix<T> {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0usize; self.n + 1];
        let mut col_indices = Vec::with_capacity(self.entries.len());
        let mut values: Vec<T> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n {
            row_offsets[r + 1] += row_offsets[r];
        }
        SparseMatrix {
            n: self.n,
            row_offsets,
            col_indices,
            values,
        }
    }
}
