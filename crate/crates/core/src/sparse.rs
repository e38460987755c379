//! Sparse symmetric matrices: triplet accumulation, a compressed sorted
//! form, and MatrixMarket export for cross-checking with external tools.
//!
//! Finalization is deterministic regardless of the order in which triplets
//! were scattered: entries are sorted by (row, col) and duplicates are
//! reduced with compensated summation, so concurrent assembly schedules all
//! produce bit-identical matrices.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::io::Write;

/// Triplet accumulator with duplicate-accumulation semantics.
#[derive(Debug, Clone)]
pub struct CooBuilder {
    nrows: usize,
    ncols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            triplets: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.triplets.push((row, col, value));
    }

    /// Sorts, deduplicates (Neumaier-compensated), and compresses.
    pub fn finalize(mut self) -> SparseMatrix {
        self.triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut i = 0;
        while i < self.triplets.len() {
            let (r, c, _) = self.triplets[i];
            let mut sum = 0.0_f64;
            let mut comp = 0.0_f64;
            while i < self.triplets.len() && self.triplets[i].0 == r && self.triplets[i].1 == c {
                let v = self.triplets[i].2;
                let t = sum + v;
                if sum.abs() >= v.abs() {
                    comp += (sum - t) + v;
                } else {
                    comp += (v - t) + sum;
                }
                sum = t;
                i += 1;
            }
            col_idx.push(c);
            values.push(sum + comp);
            row_ptr[r + 1] = col_idx.len();
        }
        // rows without entries inherit the running offset
        for r in 1..=self.nrows {
            if row_ptr[r] == 0 {
                row_ptr[r] = row_ptr[r - 1];
            } else {
                debug_assert!(row_ptr[r] >= row_ptr[r - 1]);
            }
        }
        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Immutable compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        let mut b = CooBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 1.0);
        }
        b.finalize()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[range.clone()].binary_search(&c) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.ncols);
        let mut y = DVector::zeros(self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.nrows);
        let mut y = DVector::zeros(self.ncols);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.col_idx[k])] = self.values[k];
            }
        }
        m
    }

    /// Largest absolute deviation from symmetry, `max |A - A^T|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols && self.max_asymmetry() < tol
    }

    /// Writes MatrixMarket coordinate format (1-based indices). With
    /// `symmetric`, only the lower triangle is emitted and the header is
    /// tagged accordingly.
    pub fn write_matrix_market(&self, w: &mut impl Write, symmetric: bool) -> Result<()> {
        if symmetric && !self.is_symmetric(1e-12) {
            return Err(Error::InvalidArgument(
                "matrix is not symmetric within 1e-12".into(),
            ));
        }
        let kind = if symmetric { "symmetric" } else { "general" };
        writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
        let nnz = if symmetric {
            (0..self.nrows)
                .flat_map(|r| self.row(r).map(move |(c, _)| (r, c)))
                .filter(|&(r, c)| c <= r)
                .count()
        } else {
            self.nnz()
        };
        writeln!(w, "{} {} {}", self.nrows, self.ncols, nnz)?;
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                if symmetric && c > r {
                    continue;
                }
                writeln!(w, "{} {} {:.17e}", r + 1, c + 1, v)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn duplicates_accumulate() {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 0, 1.0);
        b.push(1, 1, 2.0);
        b.push(0, 0, 0.5);
        b.push(0, 1, -1.0);
        let m = b.finalize();
        assert_eq!(m.nnz(), 3);
        assert_relative_eq!(m.get(0, 0), 1.5);
        assert_relative_eq!(m.get(0, 1), -1.0);
        assert_relative_eq!(m.get(1, 0), 0.0);
        assert_relative_eq!(m.get(1, 1), 2.0);
    }

    #[test]
    fn finalize_is_order_independent() {
        let triplets = [(0, 1, 0.1), (2, 0, 1e-17), (0, 1, 0.2), (2, 0, 1.0), (1, 1, -3.0)];
        let mut fwd = CooBuilder::new(3, 3);
        for &(r, c, v) in &triplets {
            fwd.push(r, c, v);
        }
        let mut rev = CooBuilder::new(3, 3);
        for &(r, c, v) in triplets.iter().rev() {
            rev.push(r, c, v);
        }
        assert_eq!(fwd.finalize(), rev.finalize());
    }

    #[test]
    fn matvec_and_transpose_agree_with_dense() {
        let mut b = CooBuilder::new(3, 2);
        b.push(0, 0, 1.0);
        b.push(1, 1, -2.0);
        b.push(2, 0, 3.0);
        b.push(2, 1, 4.0);
        let m = b.finalize();
        let d = m.to_dense();
        let x = DVector::from_row_slice(&[1.0, 2.0]);
        let y = DVector::from_row_slice(&[3.0, -1.0, 0.5]);
        assert_relative_eq!(m.matvec(&x), &d * &x);
        assert_relative_eq!(m.matvec_transpose(&y), d.transpose() * &y);
    }

    #[test]
    fn matrix_market_round_trip_by_eye() {
        let mut b = CooBuilder::new(2, 2);
        b.push(0, 0, 2.0);
        b.push(1, 0, -1.0);
        b.push(0, 1, -1.0);
        b.push(1, 1, 2.0);
        let m = b.finalize();
        let mut buf = Vec::new();
        m.write_matrix_market(&mut buf, true).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("%%MatrixMarket matrix coordinate real symmetric"));
        assert!(text.contains("2 2 3"));
        assert!(text.contains("2 1 -1"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn coo_matches_dense_accumulation(
            entries in proptest::collection::vec((0usize..5, 0usize..5, -10.0..10.0f64), 0..40)
        ) {
            let mut b = CooBuilder::new(5, 5);
            let mut dense = DMatrix::<f64>::zeros(5, 5);
            for &(r, c, v) in &entries {
                b.push(r, c, v);
                dense[(r, c)] += v;
            }
            let m = b.finalize();
            for r in 0..5 {
                for c in 0..5 {
                    prop_assert!((m.get(r, c) - dense[(r, c)]).abs() <= 1e-12);
                }
            }
        }
    }
}
