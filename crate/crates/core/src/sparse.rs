//! Compressed sparse row matrices.
//!
//! Only the handful of operations the discretization needs are provided:
//! assembly from triplets, products with vectors and other matrices, linear
//! combinations and diagonal shifts.

/// Row-compressed sparse matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            rows[r].push((c, v));
        }
        let mut row_offsets = Vec::with_capacity(nrows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.into_iter().peekable();
            while let Some((c, mut v)) = iter.next() {
                while let Some(&(c2, v2)) = iter.peek() {
                    if c2 != c {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                col_indices.push(c);
                values.push(v);
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix {
            nrows,
            ncols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: diag.to_vec(),
            symmetric: true,
        }
    }

    /// Marks the matrix as symmetric. Debug builds check the claim.
    pub fn with_symmetry_flag(mut self, symmetric: bool) -> Self {
        if symmetric {
            debug_assert!(self.is_symmetric(1e-12), "matrix flagged symmetric but is not");
        }
        self.symmetric = symmetric;
        self
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

    pub fn symmetry_flag(&self) -> bool {
        self.symmetric
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

    /// Iterates the stored entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yr = acc;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A`, i.e. `Aᵀ x`.
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for (r, &xr) in x.iter().enumerate() {
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        y
    }

    pub fn transpose(&self) -> SparseMatrix {
        let triplets = (0..self.nrows).flat_map(|r| self.row(r).map(move |(c, v)| (c, r, v)));
        SparseMatrix::from_triplets(self.ncols, self.nrows, triplets.collect::<Vec<_>>())
            .with_symmetry_flag(self.symmetric)
    }

    /// Sparse product `self · other`.
    pub fn matmul(&self, other: &SparseMatrix) -> SparseMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut triplets = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.ncols];
        for r in 0..self.nrows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                triplets.push((r, c, acc[c]));
                acc[c] = 0.0;
                mark[c] = false;
            }
            touched.clear();
        }
        SparseMatrix::from_triplets(self.nrows, other.ncols, triplets)
    }

    /// `alpha · self + beta · other`.
    pub fn add_scaled(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> SparseMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let triplets = (0..self.nrows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, alpha * v)))
            .chain((0..other.nrows).flat_map(|r| other.row(r).map(move |(c, v)| (r, c, beta * v))));
        let symmetric = self.symmetric && other.symmetric;
        let mut m = SparseMatrix::from_triplets(self.nrows, self.ncols, triplets.collect::<Vec<_>>());
        m.symmetric = symmetric;
        m
    }

    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    /// `self + diag(d)`.
    pub fn add_diagonal(&self, d: &[f64]) -> SparseMatrix {
        assert_eq!(d.len(), self.nrows);
        self.add_scaled(1.0, &SparseMatrix::diagonal(d), 1.0)
    }

    /// `diag(d) · self`.
    pub fn scale_rows(&self, d: &[f64]) -> SparseMatrix {
        assert_eq!(d.len(), self.nrows);
        let mut m = self.clone();
        for r in 0..m.nrows {
            for k in m.row_offsets[r]..m.row_offsets[r + 1] {
                m.values[k] *= d[r];
            }
        }
        m.symmetric = false;
        m
    }

    /// Max |a_ij − a_ji| ≤ `tol` over all stored entries.
    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|r| self.row(r).all(|(c, v)| (v - self.get(c, r)).abs() <= tol))
    }

    /// Places `blocks[i][j]` at block position `(i, j)`. `None` is a zero block.
    pub fn block(blocks: &[Vec<Option<&SparseMatrix>>]) -> SparseMatrix {
        let row_sizes: Vec<usize> = blocks
            .iter()
            .map(|row| row.iter().flatten().next().expect("block row is empty").nrows)
            .collect();
        let ncol_blocks = blocks[0].len();
        let col_sizes: Vec<usize> = (0..ncol_blocks)
            .map(|j| {
                blocks
                    .iter()
                    .find_map(|row| row[j].map(|m| m.ncols))
                    .expect("block column is empty")
            })
            .collect();
        let mut triplets = Vec::new();
        let mut r0 = 0;
        for (i, row) in blocks.iter().enumerate() {
            let mut c0 = 0;
            for (j, blk) in row.iter().enumerate() {
                if let Some(m) = blk {
                    assert_eq!((m.nrows, m.ncols), (row_sizes[i], col_sizes[j]));
                    for r in 0..m.nrows {
                        triplets.extend(m.row(r).map(|(c, v)| (r0 + r, c0 + c, v)));
                    }
                }
                c0 += col_sizes[j];
            }
            r0 += row_sizes[i];
        }
        SparseMatrix::from_triplets(r0, col_sizes.iter().sum(), triplets)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.ncols]; self.nrows];
        for (r, row) in dense.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] = v;
            }
        }
        dense
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_merge_and_sort() {
        let m = SparseMatrix::from_triplets(2, 3, vec![(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, 3.0)]);
        assert_eq!(m.col_indices(), &[0, 2, 1]);
        assert_eq!(m.values(), &[2.0, 1.5, 3.0]);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0, 1.0]), vec![3.5, 3.0]);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = SparseMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 3.0)]);
        let b = SparseMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 4.0), (1, 1, 5.0)]);
        let c = a.matmul(&b).to_dense();
        assert_eq!(c, vec![vec![8.0, 11.0], vec![0.0, 3.0]]);
    }

    #[test]
    fn block_assembly_offsets() {
        let i2 = SparseMatrix::identity(2);
        let m = SparseMatrix::block(&[vec![Some(&i2), None], vec![Some(&i2), Some(&i2)]]);
        assert_eq!(m.nrows(), 4);
        assert_eq!(m.get(2, 0), 1.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(3, 3), 1.0);
    }
}
