//! Dense row-major storage plus the compressed row/column views used by every
//! update loop, so per-iteration work scales with the number of nonzero weights.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from nested rows; all rows must share one length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            let row = row.as_ref();
            if row.len() != cols {
                return Err(Error::DimensionMismatch {
                    what: "matrix row",
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }
}

/// Nonzero structure of a matrix in both compressed-row and compressed-column
/// order. Entries are sorted by column within a row and by row within a column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePattern {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    row_of: Vec<usize>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    /// Position in the row-major arrays of each column-major entry.
    csc_to_csr: Vec<usize>,
}

impl SparsePattern {
    pub fn from_dense(m: &Matrix) -> Self {
        let (rows, cols) = (m.rows(), m.cols());
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut row_of = Vec::new();
        let mut col_counts = vec![0usize; cols];
        row_ptr.push(0);
        for i in 0..rows {
            for (j, &w) in m.row(i).iter().enumerate() {
                if w != 0.0 {
                    col_idx.push(j);
                    values.push(w);
                    row_of.push(i);
                    col_counts[j] += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }

        let mut col_ptr = Vec::with_capacity(cols + 1);
        col_ptr.push(0);
        for &c in &col_counts {
            col_ptr.push(col_ptr.last().unwrap() + c);
        }
        let nnz = col_idx.len();
        let mut next = col_ptr[..cols].to_vec();
        let mut row_idx = vec![0usize; nnz];
        let mut csc_to_csr = vec![0usize; nnz];
        for i in 0..rows {
            for p in row_ptr[i]..row_ptr[i + 1] {
                let j = col_idx[p];
                let k = next[j];
                row_idx[k] = i;
                csc_to_csr[k] = p;
                next[j] += 1;
            }
        }

        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            row_of,
            col_ptr,
            row_idx,
            csc_to_csr,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Range of row-major entry positions belonging to row `i`.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// Range of column-major entry positions belonging to column `j`.
    #[inline]
    pub fn col_range(&self, j: usize) -> std::ops::Range<usize> {
        self.col_ptr[j]..self.col_ptr[j + 1]
    }

    #[inline]
    pub fn col_of(&self, p: usize) -> usize {
        self.col_idx[p]
    }

    /// Row index of row-major entry `p`.
    #[inline]
    pub fn row_of(&self, p: usize) -> usize {
        self.row_of[p]
    }

    #[inline]
    pub fn value(&self, p: usize) -> f64 {
        self.values[p]
    }

    /// Row index of column-major entry `k`.
    #[inline]
    pub fn row_of_csc(&self, k: usize) -> usize {
        self.row_idx[k]
    }

    /// Row-major position of column-major entry `k`.
    #[inline]
    pub fn csr_pos(&self, k: usize) -> usize {
        self.csc_to_csr[k]
    }

    /// `(j, w_ij)` pairs of row `i`.
    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.row_range(i).map(move |p| (self.col_idx[p], self.values[p]))
    }

    /// `(i, w_ij)` pairs of column `j`.
    pub fn col_entries(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.col_range(j)
            .map(move |k| (self.row_idx[k], self.values[self.csc_to_csr[k]]))
    }

    /// Row-major position of `(i, j)` if that entry is nonzero.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let r = self.row_range(i);
        self.col_idx[r.clone()]
            .binary_search(&j)
            .ok()
            .map(|off| r.start + off)
    }

    /// `row_i · v` over the nonzeros of row `i`, accumulated in column order.
    #[inline]
    pub fn row_dot(&self, i: usize, v: &[f64]) -> f64 {
        self.row_range(i)
            .map(|p| self.values[p] * v[self.col_idx[p]])
            .sum()
    }
}

/// Compensated (Neumaier) summation. Objective values are sums of many terms
/// and the monotonicity checks compare consecutive iterates at ~1e-12.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

pub fn accurate_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<NeumaierSum>().value()
}
