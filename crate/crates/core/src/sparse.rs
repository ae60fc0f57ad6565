//! Column-compressed storage for the design matrix.

/// Compressed sparse columns with `u32` row indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseColumns {
    nrows: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
}

impl SparseColumns {
    pub fn new(nrows: usize) -> Self {
        Self {
            nrows,
            col_ptr: vec![0],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Dense column-major input; exact zeros are dropped.
    pub fn from_dense_columns(nrows: usize, columns: &[Vec<f64>]) -> Self {
        let mut out = Self::new(nrows);
        for col in columns {
            assert_eq!(col.len(), nrows);
            out.push_column(
                col.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, &v)| (i as u32, v)),
            );
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.col_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Appends a column given `(row, value)` pairs in increasing row order.
    pub fn push_column<I: IntoIterator<Item = (u32, f64)>>(&mut self, entries: I) {
        for (i, v) in entries {
            debug_assert!((i as usize) < self.nrows);
            self.row_idx.push(i);
            self.values.push(v);
        }
        self.col_ptr.push(self.values.len());
    }

    /// Appends every column of `other`.
    pub fn append(&mut self, other: &SparseColumns) {
        assert_eq!(self.nrows, other.nrows);
        let base = self.values.len();
        self.row_idx.extend_from_slice(&other.row_idx);
        self.values.extend_from_slice(&other.values);
        self.col_ptr
            .extend(other.col_ptr[1..].iter().map(|p| p + base));
    }

    #[inline]
    pub fn column(&self, j: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        (&self.row_idx[a..b], &self.values[a..b])
    }

    pub fn column_is_empty(&self, j: usize) -> bool {
        self.col_ptr[j] == self.col_ptr[j + 1]
    }

    #[inline]
    pub fn dot(&self, j: usize, v: &[f64]) -> f64 {
        let (rows, vals) = self.column(j);
        rows.iter()
            .zip(vals)
            .map(|(&i, &x)| x * v[i as usize])
            .sum()
    }

    /// `v += alpha * column(j)`.
    #[inline]
    pub fn axpy(&self, j: usize, alpha: f64, v: &mut [f64]) {
        let (rows, vals) = self.column(j);
        for (&i, &x) in rows.iter().zip(vals) {
            v[i as usize] += alpha * x;
        }
    }

    /// `sum_j beta[j] * column(j)` over the first `beta.len()` columns.
    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                self.axpy(j, b, &mut out);
            }
        }
        out
    }

    pub fn to_dense_column(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.axpy(j, 1.0, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_axpy_and_append() {
        let a = SparseColumns::from_dense_columns(3, &[vec![1.0, 0.0, 2.0], vec![0.0, 0.0, 0.0]]);
        assert_eq!(a.ncols(), 2);
        assert_eq!(a.nnz(), 2);
        assert!(a.column_is_empty(1));
        assert_eq!(a.dot(0, &[1.0, 5.0, 3.0]), 7.0);
        let mut b = SparseColumns::from_dense_columns(3, &[vec![0.0, 4.0, 0.0]]);
        b.append(&a);
        assert_eq!(b.ncols(), 3);
        assert_eq!(b.to_dense_column(1), vec![1.0, 0.0, 2.0]);
        assert_eq!(b.mul_vec(&[1.0, 2.0, 3.0]), vec![2.0, 4.0, 4.0]);
    }
}
