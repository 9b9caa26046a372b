//! Compressed-sparse-row complex matrices on the sector space.
//!
//! The matvec parallelizes over row blocks; every output element is still
//! accumulated in a fixed order, so parallel and sequential applies agree
//! bit for bit.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Row-block size for the parallel matvec.
const ROW_BLOCK: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<Complex64>,
}

impl SparseOperator {
    /// Assemble from (row, col, value) triplets. Duplicates are summed;
    /// entries that are exactly zero after summation are dropped.
    pub fn from_triplets(dim: usize, mut entries: Vec<(usize, usize, Complex64)>) -> Self {
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = Vec::with_capacity(dim + 1);
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        row_offsets.push(0);
        let mut row = 0usize;
        let mut i = 0usize;
        while i < entries.len() {
            let (r, c, _) = entries[i];
            debug_assert!(r < dim && c < dim);
            while row < r {
                row_offsets.push(col_indices.len());
                row += 1;
            }
            let mut v = Complex64::ZERO;
            while i < entries.len() && entries[i].0 == r && entries[i].1 == c {
                v += entries[i].2;
                i += 1;
            }
            if v != Complex64::ZERO {
                col_indices.push(c as u32);
                values.push(v);
            }
        }
        while row < dim {
            row_offsets.push(col_indices.len());
            row += 1;
        }
        SparseOperator {
            dim,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let entries = diag
            .iter()
            .enumerate()
            .map(|(i, &d)| (i, i, Complex64::new(d, 0.0)))
            .collect();
        Self::from_triplets(diag.len(), entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn apply_rows(&self, x: &[Complex64], y: &mut [Complex64], first_row: usize) {
        for (local, yi) in y.iter_mut().enumerate() {
            let r = first_row + local;
            let mut acc = Complex64::ZERO;
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[k] * x[self.col_indices[k] as usize];
            }
            *yi = acc;
        }
    }

    /// y = A x, single-threaded.
    pub fn apply_sequential(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        self.apply_rows(x, y, 0);
    }

    /// y = A x over rayon row blocks.
    #[cfg(feature = "parallel")]
    pub fn apply_parallel(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        y.par_chunks_mut(ROW_BLOCK)
            .enumerate()
            .for_each(|(block, rows)| self.apply_rows(x, rows, block * ROW_BLOCK));
    }

    /// y = A x using the parallel kernel when enabled and worthwhile.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        #[cfg(feature = "parallel")]
        {
            if self.dim >= 2 * ROW_BLOCK {
                self.apply_parallel(x, y);
                return;
            }
        }
        self.apply_sequential(x, y);
    }

    pub fn apply_alloc(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::ZERO; self.dim];
        self.apply(x, &mut y);
        y
    }

    /// <psi| A |psi>
    pub fn expectation(&self, psi: &[Complex64]) -> Complex64 {
        let y = self.apply_alloc(psi);
        linalg::dot(psi, &y)
    }

    pub fn conj_transpose(&self) -> Self {
        let mut entries = Vec::with_capacity(self.nnz());
        for r in 0..self.dim {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                entries.push((self.col_indices[k] as usize, r, self.values[k].conj()));
            }
        }
        Self::from_triplets(self.dim, entries)
    }

    /// alpha * A + beta * B
    pub fn linear_combination(
        alpha: Complex64,
        a: &SparseOperator,
        beta: Complex64,
        b: &SparseOperator,
    ) -> Result<Self> {
        if a.dim != b.dim {
            return Err(Error::DimensionMismatch {
                expected: a.dim,
                got: b.dim,
            });
        }
        let mut entries = Vec::with_capacity(a.nnz() + b.nnz());
        for r in 0..a.dim {
            for k in a.row_offsets[r]..a.row_offsets[r + 1] {
                entries.push((r, a.col_indices[k] as usize, alpha * a.values[k]));
            }
            for k in b.row_offsets[r]..b.row_offsets[r + 1] {
                entries.push((r, b.col_indices[k] as usize, beta * b.values[k]));
            }
        }
        Ok(Self::from_triplets(a.dim, entries))
    }

    /// A + diag(d)
    pub fn add_diagonal(&self, diag: &[f64]) -> Result<Self> {
        if diag.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: diag.len(),
            });
        }
        let mut entries = Vec::with_capacity(self.nnz() + self.dim);
        for r in 0..self.dim {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                entries.push((r, self.col_indices[k] as usize, self.values[k]));
            }
            if diag[r] != 0.0 {
                entries.push((r, r, Complex64::new(diag[r], 0.0)));
            }
        }
        Ok(Self::from_triplets(self.dim, entries))
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for r in 0..self.dim {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                m[(r, self.col_indices[k] as usize)] += self.values[k];
            }
        }
        m
    }
}
