//! Minimal compressed-row sparse matrix for the reservoir.

use serde::{Deserialize, Serialize};

/// Row-compressed sparse matrix with f64 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRowMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseRowMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<_> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            values.push(v);
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self { nrows, ncols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.col_idx[k], self.values[k]));
            }
        }
        out
    }

    /// y += alpha * (self x)
    pub fn mul_add_into(&self, y: &mut nalgebra::DVector<f64>, alpha: f64, x: &nalgebra::DVector<f64>) {
        debug_assert_eq!(y.len(), self.nrows);
        debug_assert_eq!(x.len(), self.ncols);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] += alpha * acc;
        }
    }

    pub fn scale_values(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn matvec_matches_dense() {
        let triplets = vec![(0, 1, 2.0), (1, 0, -1.0), (2, 2, 3.0), (0, 2, 0.5)];
        let s = SparseRowMatrix::from_triplets(3, 3, &triplets);
        assert_eq!(s.nnz(), 4);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let mut y = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        s.mul_add_into(&mut y, 2.0, &x);
        let dense = s.to_dense();
        let expected = DVector::from_vec(vec![1.0, 1.0, 1.0]) + dense * x * 2.0;
        assert_eq!(y, expected);
    }
}
