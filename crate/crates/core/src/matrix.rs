//! Canonical symmetric sparse storage.
//!
//! A [`SparseSymmetric`] keeps only the lower triangle (diagonal included) in
//! compressed sparse column form. Row indices are strictly increasing within a
//! column and every diagonal entry is present and positive.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseSymmetric {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    nnz_full: usize,
}

impl SparseSymmetric {
    /// Builds the canonical form from coordinate entries in either triangle.
    ///
    /// Entries from the upper triangle are mirrored into the lower one and
    /// duplicates are summed in input order. Explicit zeros are kept.
    pub fn from_triplets<I>(n: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        let mut lower = Vec::new();
        for (row, col, value) in entries {
            if row >= n || col >= n {
                return Err(Error::IndexOutOfRange { row, col, n });
            }
            let (i, j) = if row >= col { (row, col) } else { (col, row) };
            lower.push((j, i, value));
        }
        // Stable: duplicates are summed in the order they were given.
        lower.sort_by_key(|&(j, i, _)| (j, i));

        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(lower.len());
        let mut values: Vec<f64> = Vec::with_capacity(lower.len());
        let mut last: Option<(usize, usize)> = None;
        for (j, i, v) in lower {
            if last == Some((j, i)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            last = Some((j, i));
            row_idx.push(i);
            values.push(v);
            col_ptr[j + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        Self::from_lower_csc(n, col_ptr, row_idx, values)
    }

    /// Validates lower-triangular CSC arrays and wraps them.
    pub fn from_lower_csc(n: usize, col_ptr: Vec<usize>, row_idx: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if col_ptr.len() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, found: col_ptr.len() });
        }
        if row_idx.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: row_idx.len(), found: values.len() });
        }
        if col_ptr[0] != 0 || col_ptr[n] != row_idx.len() {
            return Err(Error::DimensionMismatch { expected: row_idx.len(), found: col_ptr[n] });
        }
        let mut nnz_full = 0;
        for j in 0..n {
            let (start, end) = (col_ptr[j], col_ptr[j + 1]);
            if start > end {
                return Err(Error::DimensionMismatch { expected: start, found: end });
            }
            let rows = &row_idx[start..end];
            for (k, &i) in rows.iter().enumerate() {
                if i >= n || i < j || (k > 0 && rows[k - 1] >= i) {
                    return Err(Error::IndexOutOfRange { row: i, col: j, n });
                }
            }
            match rows.first() {
                Some(&i) if i == j => {
                    let d = values[start];
                    if !(d > 0.0) {
                        return Err(Error::NonPositiveDiagonal { col: j, value: d });
                    }
                }
                _ => return Err(Error::MissingDiagonal { col: j }),
            }
            nnz_full += 2 * rows.len() - 1;
        }
        Ok(Self { n, col_ptr, row_idx, values, nnz_full })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries of the lower triangle.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Non-zeros of the full symmetric matrix; off-diagonals count twice.
    pub fn nnz_full(&self) -> usize {
        self.nnz_full
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Row indices and values of column `j` (rows `>= j`).
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[range.clone()], &self.values[range])
    }

    /// Fraction of non-zero cells in the full matrix.
    pub fn density(&self) -> f64 {
        let n = self.n as f64;
        self.nnz_full as f64 / (n * n)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.values[self.col_ptr[j]]).collect()
    }

    /// Strict lower part transposed: for each row `i`, the columns `j < i`
    /// holding an entry. Returned as `(row_ptr, cols)`.
    pub fn lower_rows(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.n;
        let mut row_ptr = vec![0usize; n + 1];
        for j in 0..n {
            for &i in &self.column(j).0[1..] {
                row_ptr[i + 1] += 1;
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut next = row_ptr.clone();
        let mut cols = vec![0usize; row_ptr[n]];
        for j in 0..n {
            for &i in &self.column(j).0[1..] {
                cols[next[i]] = j;
                next[i] += 1;
            }
        }
        (row_ptr, cols)
    }

    /// `y = A x` using both triangles.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "vector length must match the matrix");
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// Infinity norm (maximum absolute row sum) of the full matrix.
    pub fn norm_inf(&self) -> f64 {
        let mut sums = vec![0.0f64; self.n];
        for j in 0..self.n {
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                sums[i] += v.abs();
                if i != j {
                    sums[j] += v.abs();
                }
            }
        }
        sums.into_iter().fold(0.0, f64::max)
    }

    /// Frobenius norm of the full matrix.
    pub fn norm_frobenius(&self) -> f64 {
        let mut sum = 0.0;
        for j in 0..self.n {
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                sum += if i == j { v * v } else { 2.0 * v * v };
            }
        }
        libm::sqrt(sum)
    }

    /// Full symmetric matrix as a column-major dense array.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut dense = vec![0.0; n * n];
        for j in 0..n {
            let (rows, vals) = self.column(j);
            for (&i, &v) in rows.iter().zip(vals) {
                dense[i + j * n] = v;
                dense[j + i * n] = v;
            }
        }
        dense
    }

    /// Iterates the stored lower-triangle entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |j| {
            let (rows, vals) = self.column(j);
            rows.iter().zip(vals).map(move |(&i, &v)| (i, j, v))
        })
    }
}
