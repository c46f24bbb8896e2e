use std::ops::Range;

use super::{BlockSelector, DenseMatrix, FlopCount, Result, SparseError};

/// Compressed sparse row matrix with `f64` values.
///
/// Column indices within a row are strictly increasing and every stored
/// value is finite (explicit zeros are allowed).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(SparseError::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != values.len() {
            return Err(SparseError::InvalidStructure(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        if col_indices.len() != values.len() {
            return Err(SparseError::InvalidStructure(
                "col_indices and values differ in length".into(),
            ));
        }
        for r in 0..n_rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return Err(SparseError::InvalidStructure(format!(
                    "row_offsets decreases at row {r}"
                )));
            }
            let cols = &col_indices[lo..hi];
            if let Some(&c) = cols.iter().find(|&&c| c >= n_cols) {
                return Err(SparseError::IndexOutOfRange {
                    index: c,
                    bound: n_cols,
                });
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(SparseError::InvalidStructure(format!(
                    "column indices not strictly increasing in row {r}"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SparseError::InvalidStructure("non-finite value".into()));
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Unchecked constructor for kernels that build valid structures by construction.
    pub(crate) fn from_parts(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_offsets.len(), n_rows + 1);
        debug_assert_eq!(*row_offsets.last().unwrap(), values.len());
        CsrMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::from_parts(n_rows, n_cols, vec![0; n_rows + 1], Vec::new(), Vec::new())
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate coordinates are rejected.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        for &(r, c, v) in &sorted {
            if r >= n_rows {
                return Err(SparseError::IndexOutOfRange {
                    index: r,
                    bound: n_rows,
                });
            }
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::new(n_rows, n_cols, row_offsets, col_indices, values)
    }

    /// Builds a matrix from dense rows, dropping exact zeros.
    pub fn from_dense_rows(rows: &[Vec<f64>], n_cols: usize) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            if row.len() != n_cols {
                return Err(SparseError::DimensionMismatch {
                    expected: n_cols,
                    actual: row.len(),
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(values.len());
        }
        Self::new(rows.len(), n_cols, row_offsets, col_indices, values)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// nnz / (rows * cols); zero for an empty shape.
    pub fn density(&self) -> f64 {
        let cells = self.n_rows as f64 * self.n_cols as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.nnz() as f64 / cells
        }
    }

    /// Column indices and values of row `r`.
    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[r], self.row_offsets[r + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    #[inline]
    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_offsets[r + 1] - self.row_offsets[r]
    }

    #[inline]
    pub(crate) fn row_dot(&self, r: usize, v: &[f64]) -> f64 {
        let (cols, vals) = self.row(r);
        cols.iter().zip(vals).map(|(&c, &x)| x * v[c]).sum()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// `X * v`.
    pub fn spmv(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_cols {
            return Err(SparseError::DimensionMismatch {
                expected: self.n_cols,
                actual: v.len(),
            });
        }
        Ok((0..self.n_rows).map(|r| self.row_dot(r, v)).collect())
    }

    /// `X^T * v`.
    pub fn spmv_t(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.n_rows {
            return Err(SparseError::DimensionMismatch {
                expected: self.n_rows,
                actual: v.len(),
            });
        }
        let mut out = vec![0.0; self.n_cols];
        self.spmv_t_acc(v, 1.0, &mut out);
        Ok(out)
    }

    /// `out += scale * X^T v`, no dimension checks.
    pub(crate) fn spmv_t_acc(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            let coeff = scale * vr;
            let (cols, vals) = self.row(r);
            for (&c, &x) in cols.iter().zip(vals) {
                out[c] += coeff * x;
            }
        }
    }

    /// Flops credited to one product with this matrix: `2 * nnz`.
    pub fn spmv_flops(&self) -> FlopCount {
        FlopCount::exact(2 * self.nnz() as u64)
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let mut next = counts.clone();
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &x) in cols.iter().zip(vals) {
                let slot = next[c];
                col_indices[slot] = r;
                values[slot] = x;
                next[c] += 1;
            }
        }
        CsrMatrix::from_parts(self.n_cols, self.n_rows, counts, col_indices, values)
    }

    /// Rows `sel.indices()` stacked in selector order.
    pub fn extract_rows(&self, sel: &BlockSelector) -> Result<CsrMatrix> {
        if sel.universe_size() != self.n_rows {
            return Err(SparseError::DimensionMismatch {
                expected: self.n_rows,
                actual: sel.universe_size(),
            });
        }
        self.gather_rows(sel.indices())
    }

    /// Rows at arbitrary positions (repeats allowed), stacked in order.
    pub fn gather_rows(&self, rows: &[usize]) -> Result<CsrMatrix> {
        if let Some(&r) = rows.iter().find(|&&r| r >= self.n_rows) {
            return Err(SparseError::IndexOutOfRange {
                index: r,
                bound: self.n_rows,
            });
        }
        let total: usize = rows.iter().map(|&r| self.row_nnz(r)).sum();
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total);
        for &r in rows {
            let (cols, vals) = self.row(r);
            col_indices.extend_from_slice(cols);
            values.extend_from_slice(vals);
            row_offsets.push(values.len());
        }
        Ok(CsrMatrix::from_parts(
            rows.len(),
            self.n_cols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    /// Columns `sel.indices()`; output column `j` is input column `sel.indices()[j]`.
    pub fn extract_cols(&self, sel: &BlockSelector) -> Result<CsrMatrix> {
        if sel.universe_size() != self.n_cols {
            return Err(SparseError::DimensionMismatch {
                expected: self.n_cols,
                actual: sel.universe_size(),
            });
        }
        let wanted = sel.indices();
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            // both lists are sorted: merge
            let (mut i, mut j) = (0, 0);
            while i < cols.len() && j < wanted.len() {
                match cols[i].cmp(&wanted[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => {
                        col_indices.push(j);
                        values.push(vals[i]);
                        i += 1;
                        j += 1;
                    }
                }
            }
            row_offsets.push(values.len());
        }
        Ok(CsrMatrix::from_parts(
            self.n_rows,
            wanted.len(),
            row_offsets,
            col_indices,
            values,
        ))
    }

    /// Contiguous row block `[range.start, range.end)`.
    pub fn row_block(&self, range: Range<usize>) -> CsrMatrix {
        assert!(range.start <= range.end && range.end <= self.n_rows);
        let base = self.row_offsets[range.start];
        let row_offsets = self.row_offsets[range.start..=range.end]
            .iter()
            .map(|&o| o - base)
            .collect();
        let (lo, hi) = (base, self.row_offsets[range.end]);
        CsrMatrix::from_parts(
            range.len(),
            self.n_cols,
            row_offsets,
            self.col_indices[lo..hi].to_vec(),
            self.values[lo..hi].to_vec(),
        )
    }

    /// Contiguous column block `[range.start, range.end)`, renumbered from zero.
    pub fn col_block(&self, range: Range<usize>) -> CsrMatrix {
        assert!(range.start <= range.end && range.end <= self.n_cols);
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let lo = cols.partition_point(|&c| c < range.start);
            let hi = cols.partition_point(|&c| c < range.end);
            col_indices.extend(cols[lo..hi].iter().map(|&c| c - range.start));
            values.extend_from_slice(&vals[lo..hi]);
            row_offsets.push(values.len());
        }
        CsrMatrix::from_parts(self.n_rows, range.len(), row_offsets, col_indices, values)
    }

    /// Stacks row blocks vertically; all blocks must share a column count.
    pub fn vstack(blocks: &[CsrMatrix]) -> Result<CsrMatrix> {
        let n_cols = blocks.first().map_or(0, |b| b.n_cols);
        let mut row_offsets = vec![0usize];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        let mut n_rows = 0;
        for b in blocks {
            if b.n_cols != n_cols {
                return Err(SparseError::DimensionMismatch {
                    expected: n_cols,
                    actual: b.n_cols,
                });
            }
            let base = values.len();
            row_offsets.extend(b.row_offsets[1..].iter().map(|&o| o + base));
            col_indices.extend_from_slice(&b.col_indices);
            values.extend_from_slice(&b.values);
            n_rows += b.n_rows;
        }
        Ok(CsrMatrix::from_parts(n_rows, n_cols, row_offsets, col_indices, values))
    }

    /// Concatenates column blocks horizontally; all blocks must share a row count.
    pub fn hstack(blocks: &[CsrMatrix]) -> Result<CsrMatrix> {
        let n_rows = blocks.first().map_or(0, |b| b.n_rows);
        if let Some(b) = blocks.iter().find(|b| b.n_rows != n_rows) {
            return Err(SparseError::DimensionMismatch {
                expected: n_rows,
                actual: b.n_rows,
            });
        }
        let n_cols = blocks.iter().map(|b| b.n_cols).sum();
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for r in 0..n_rows {
            let mut shift = 0;
            for b in blocks {
                let (cols, vals) = b.row(r);
                col_indices.extend(cols.iter().map(|&c| c + shift));
                values.extend_from_slice(vals);
                shift += b.n_cols;
            }
            row_offsets.push(values.len());
        }
        Ok(CsrMatrix::from_parts(n_rows, n_cols, row_offsets, col_indices, values))
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &x) in cols.iter().zip(vals) {
                out.set(r, c, x);
            }
        }
        out
    }

    /// Squared Frobenius norm.
    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}
