use super::Real;

/// Compressed sparse row matrix used for neighbor aggregation, Laplacians and pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> Csr<T> {
    /// Builds from per-row `(column, value)` lists. Entries keep the given order.
    pub fn from_rows(cols: usize, rows: &[Vec<(usize, T)>]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in rows {
            for &(c, v) in row {
                assert!(c < cols, "column {c} out of range {cols}");
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
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

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Entry `(r, c)`, summing duplicates; zero when absent.
    pub fn get(&self, r: usize, c: usize) -> T {
        self.row(r)
            .filter(|&(j, _)| j == c)
            .fold(T::zero(), |acc, (_, v)| acc + v)
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut out = vec![vec![T::zero(); self.cols]; self.rows];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = row[c] + v;
            }
        }
        out
    }

    /// `out += self @ x` for a row-major `cols x width` block `x`.
    pub fn matmul_acc(&self, x: &[T], width: usize, out: &mut [T]) {
        debug_assert_eq!(x.len(), self.cols * width);
        debug_assert_eq!(out.len(), self.rows * width);
        for r in 0..self.rows {
            let dst = &mut out[r * width..(r + 1) * width];
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[k];
                let src = &x[self.indices[k] * width..(self.indices[k] + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = *d + v * *s;
                }
            }
        }
    }

    /// `out += self^T @ y` for a row-major `rows x width` block `y`.
    pub fn transpose_matmul_acc(&self, y: &[T], width: usize, out: &mut [T]) {
        debug_assert_eq!(y.len(), self.rows * width);
        debug_assert_eq!(out.len(), self.cols * width);
        for r in 0..self.rows {
            let src = &y[r * width..(r + 1) * width];
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[k];
                let c = self.indices[k];
                let dst = &mut out[c * width..(c + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = *d + v * *s;
                }
            }
        }
    }

    /// Block-diagonal stack of several matrices.
    pub fn block_diag(blocks: &[&Csr<T>]) -> Self {
        let rows = blocks.iter().map(|b| b.rows).sum();
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let mut col_offset = 0;
        for b in blocks {
            for r in 0..b.rows {
                for (c, v) in b.row(r) {
                    indices.push(c + col_offset);
                    values.push(v);
                }
                indptr.push(indices.len());
            }
            col_offset += b.cols;
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn cast<U: Real>(&self) -> Csr<U> {
        Csr {
            rows: self.rows,
            cols: self.cols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}
