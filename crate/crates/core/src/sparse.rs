//! Compressed-sparse-row matrices used as fixed linear measurement operators.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a CSR matrix from per-row `(column, value)` lists. Duplicate
    /// columns within a row are summed.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows.into_iter() {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if c >= cols {
                    return Err(Error::Shape(format!("column {c} out of range for {cols} columns")));
                }
                if last == Some(c) {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self { rows: row_ptr.len() - 1, cols, row_ptr, col_idx, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// `y = A x` where `x` is `[cols, channels]` row-major.
    pub fn apply(&self, x: &[f64], channels: usize) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols * channels);
        let mut y = vec![0.0; self.rows * channels];
        for r in 0..self.rows {
            let out = &mut y[r * channels..(r + 1) * channels];
            for (c, v) in self.row_entries(r) {
                let src = &x[c * channels..(c + 1) * channels];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        y
    }

    /// `x = Aᵀ y` where `y` is `[rows, channels]` row-major.
    pub fn apply_transpose(&self, y: &[f64], channels: usize) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.rows * channels);
        let mut x = vec![0.0; self.cols * channels];
        for r in 0..self.rows {
            let src = &y[r * channels..(r + 1) * channels];
            for (c, v) in self.row_entries(r) {
                let out = &mut x[c * channels..(c + 1) * channels];
                for (o, s) in out.iter_mut().zip(src) {
                    *o += v * s;
                }
            }
        }
        x
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.cols]; self.rows];
        for (r, row) in dense.iter_mut().enumerate() {
            for (c, v) in self.row_entries(r) {
                row[c] += v;
            }
        }
        dense
    }
}
