//! Sparse matrix core: dual CSR/CSC storage plus the handful of kernels
//! the rest of the library is built on (row normalization, vector-matrix
//! products, column cosine similarity).

use crate::error::{Error, Result};

/// Immutable sparse matrix with nonnegative finite weights, stored in both
/// row-major (CSR) and column-major (CSC) order so that row traversal and
/// column traversal are both cheap.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    // CSR
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    row_val: Vec<f64>,
    // CSC
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    col_val: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from coordinate triples. Rejects duplicates, negative
    /// or non-finite weights and out-of-range indices. Explicit zeros are
    /// dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, v) in triplets {
            if r >= n_rows {
                return Err(Error::IndexOutOfRange { index: r, bound: n_rows });
            }
            if c >= n_cols {
                return Err(Error::IndexOutOfRange { index: c, bound: n_cols });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { row: r, col: c });
            }
            if v < 0.0 {
                return Err(Error::NegativeWeight { row: r, col: c, value: v });
            }
        }
        let mut entries: Vec<(usize, usize, f64)> = triplets
            .iter()
            .copied()
            .filter(|&(_, _, v)| v != 0.0)
            .collect();
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::DuplicateEntry { row: w[0].0, col: w[0].1 });
            }
        }
        Ok(Self::from_sorted_entries(n_rows, n_cols, entries))
    }

    /// Internal constructor; `entries` must be sorted row-major with no
    /// duplicates, zeros already dropped, and validated weights.
    fn from_sorted_entries(
        n_rows: usize,
        n_cols: usize,
        entries: Vec<(usize, usize, f64)>,
    ) -> Self {
        let nnz = entries.len();
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(nnz);
        let mut row_val = Vec::with_capacity(nnz);
        for &(r, c, v) in &entries {
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            row_val.push(v);
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }

        // counting sort by column for the CSC side
        let mut col_ptr = vec![0usize; n_cols + 1];
        for &(_, c, _) in &entries {
            col_ptr[c + 1] += 1;
        }
        for j in 0..n_cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut row_idx = vec![0usize; nnz];
        let mut col_val = vec![0.0f64; nnz];
        let mut cursor = col_ptr.clone();
        for &(r, c, v) in &entries {
            let k = cursor[c];
            row_idx[k] = r;
            col_val[k] = v;
            cursor[c] += 1;
        }

        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            row_val,
            col_ptr,
            row_idx,
            col_val,
        }
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &triplets).expect("identity triplets are valid")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Entries of row `i` as (column, weight), ascending by column.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.row_val[lo..hi].iter().copied())
    }

    /// Entries of column `j` as (row, weight), ascending by row.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        self.row_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.col_val[lo..hi].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn col_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.row_val[lo + k],
            Err(_) => 0.0,
        }
    }

    /// All entries as coordinate triples in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// x^T * self, for a row vector x of length n_rows.
    pub fn vec_mul(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_rows {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (j, v) in self.row(i) {
                out[j] += xi * v;
            }
        }
        Ok(out)
    }

    /// Dot product of columns i and j, exploiting sortedness.
    pub fn col_dot(&self, i: usize, j: usize) -> f64 {
        let (ai, av) = (
            &self.row_idx[self.col_ptr[i]..self.col_ptr[i + 1]],
            &self.col_val[self.col_ptr[i]..self.col_ptr[i + 1]],
        );
        let (bi, bv) = (
            &self.row_idx[self.col_ptr[j]..self.col_ptr[j + 1]],
            &self.col_val[self.col_ptr[j]..self.col_ptr[j + 1]],
        );
        let mut p = 0;
        let mut q = 0;
        let mut acc = 0.0;
        while p < ai.len() && q < bi.len() {
            match ai[p].cmp(&bi[q]) {
                std::cmp::Ordering::Less => p += 1,
                std::cmp::Ordering::Greater => q += 1,
                std::cmp::Ordering::Equal => {
                    acc += av[p] * bv[q];
                    p += 1;
                    q += 1;
                }
            }
        }
        acc
    }

    pub fn col_norm(&self, j: usize) -> f64 {
        self.col(j).map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    /// Dense copy, row-major. Test and diagnostics helper; avoid on large
    /// matrices.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, j, v) in self.triplets() {
            dense[i][j] = v;
        }
        dense
    }

    /// Rescales every row by a positive factor, preserving the sparsity
    /// pattern. Used by normalization routines.
    fn scale_rows(&self, factors: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            let lo = out.row_ptr[i];
            let hi = out.row_ptr[i + 1];
            for v in &mut out.row_val[lo..hi] {
                *v *= factors[i];
            }
        }
        for k in 0..out.row_idx.len() {
            out.col_val[k] *= factors[out.row_idx[k]];
        }
        out
    }
}

/// Row-sum certification bound for stochastic matrices. Rows within this
/// residual of 1 are renormalized once at construction; anything further off
/// is rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-10;

/// A sparse matrix certified row-stochastic: every row sums to 1 within
/// [`ROW_SUM_TOLERANCE`] and all entries lie in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    inner: SparseMatrix,
    tolerance: f64,
}

impl StochasticMatrix {
    /// Certifies `m` as row-stochastic, renormalizing rows whose sum drifts
    /// from 1 by less than the tolerance.
    pub fn certify(m: SparseMatrix) -> Result<Self> {
        let mut factors = vec![1.0; m.n_rows()];
        let mut needs_rescale = false;
        for i in 0..m.n_rows() {
            let sum = m.row_sum(i);
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NotStochastic {
                    row: i,
                    sum,
                    tolerance: ROW_SUM_TOLERANCE,
                });
            }
            if sum != 1.0 {
                factors[i] = 1.0 / sum;
                needs_rescale = true;
            }
        }
        let inner = if needs_rescale { m.scale_rows(&factors) } else { m };
        Ok(StochasticMatrix {
            inner,
            tolerance: ROW_SUM_TOLERANCE,
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.inner
    }

    pub fn order(&self) -> usize {
        self.inner.n_rows()
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }
}

/// Dense real vector. Entries are finite by construction in all library
/// paths; `new` asserts it.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    pub fn new(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        DenseVector { values }
    }

    pub fn zeros(len: usize) -> Self {
        DenseVector {
            values: vec![0.0; len],
        }
    }

    /// Standard basis vector e_i.
    pub fn basis(len: usize, i: usize) -> Self {
        let mut values = vec![0.0; len];
        values[i] = 1.0;
        DenseVector { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn norm_l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn l1_distance(&self, other: &DenseVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    /// Rescales to unit 1-norm in place. No-op on the zero vector.
    pub fn normalize_l1(&mut self) {
        let s = self.norm_l1();
        if s > 0.0 {
            for v in &mut self.values {
                *v /= s;
            }
        }
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl From<Vec<f64>> for DenseVector {
    fn from(values: Vec<f64>) -> Self {
        DenseVector::new(values)
    }
}

/// Divides each row of `a` by its sum, producing a row-stochastic matrix with
/// the same sparsity pattern.
pub fn row_normalize(a: &SparseMatrix) -> Result<StochasticMatrix> {
    let mut factors = vec![0.0; a.n_rows()];
    for i in 0..a.n_rows() {
        let sum = a.row_sum(i);
        if sum <= 0.0 {
            return Err(Error::ZeroRow(i));
        }
        factors[i] = 1.0 / sum;
    }
    StochasticMatrix::certify(a.scale_rows(&factors))
}

/// x^T * A for a row vector x over the states of A.
pub fn vec_mat(x: &DenseVector, a: &StochasticMatrix) -> Result<DenseVector> {
    Ok(DenseVector::new(a.matrix().vec_mul(x.as_slice())?))
}

/// Cosine similarity between columns i and j of R. For nonnegative data the
/// result lies in [0, 1].
pub fn cosine_columns(r: &SparseMatrix, i: usize, j: usize) -> Result<f64> {
    let ni = r.col_norm(i);
    if ni == 0.0 {
        return Err(Error::ZeroColumn(i));
    }
    let nj = r.col_norm(j);
    if nj == 0.0 {
        return Err(Error::ZeroColumn(j));
    }
    Ok(r.col_dot(i, j) / (ni * nj))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(n_rows: usize, n_cols: usize, t: &[(usize, usize, f64)]) -> SparseMatrix {
        SparseMatrix::from_triplets(n_rows, n_cols, t).unwrap()
    }

    #[test]
    fn row_normalize_divides_by_row_sums() {
        let a = mat(2, 2, &[(0, 0, 2.0), (0, 1, 2.0), (1, 1, 4.0)]);
        let s = row_normalize(&a).unwrap();
        assert_eq!(
            s.matrix().to_dense(),
            vec![vec![0.5, 0.5], vec![0.0, 1.0]]
        );
    }

    #[test]
    fn row_normalize_identity_is_identity() {
        let s = row_normalize(&SparseMatrix::identity(3)).unwrap();
        assert_eq!(s.matrix().to_dense(), SparseMatrix::identity(3).to_dense());
    }

    #[test]
    fn row_normalize_rejects_zero_row() {
        let a = mat(2, 2, &[(0, 0, 1.0)]);
        match row_normalize(&a) {
            Err(Error::ZeroRow(1)) => {}
            other => panic!("expected ZeroRow(1), got {other:?}"),
        }
    }

    #[test]
    fn vec_mat_identity_and_permutation() {
        let id = StochasticMatrix::certify(SparseMatrix::identity(2)).unwrap();
        let e1 = DenseVector::basis(2, 0);
        assert_eq!(vec_mat(&e1, &id).unwrap().as_slice(), &[1.0, 0.0]);

        let perm =
            StochasticMatrix::certify(mat(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)])).unwrap();
        assert_eq!(vec_mat(&e1, &perm).unwrap().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn vec_mat_hand_computed_product() {
        let a = StochasticMatrix::certify(mat(
            2,
            2,
            &[(0, 0, 0.5), (0, 1, 0.5), (1, 1, 1.0)],
        ))
        .unwrap();
        let x = DenseVector::new(vec![0.5, 0.5]);
        let y = vec_mat(&x, &a).unwrap();
        assert!((y[0] - 0.25).abs() < 1e-15);
        assert!((y[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn vec_mat_dimension_mismatch() {
        let id = StochasticMatrix::certify(SparseMatrix::identity(2)).unwrap();
        let x = DenseVector::zeros(3);
        assert!(matches!(
            vec_mat(&x, &id),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cosine_identical_disjoint_and_overlapping() {
        // columns: c0 = (1,1,0), c1 = (1,0,0), c2 = (0,0,1), c3 = (1,1,0)
        let r = mat(
            3,
            4,
            &[
                (0, 0, 1.0),
                (1, 0, 1.0),
                (0, 1, 1.0),
                (2, 2, 1.0),
                (0, 3, 1.0),
                (1, 3, 1.0),
            ],
        );
        assert!((cosine_columns(&r, 0, 3).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_columns(&r, 0, 2).unwrap(), 0.0);
        assert!((cosine_columns(&r, 0, 1).unwrap() - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cosine_rejects_zero_column() {
        let r = mat(2, 2, &[(0, 0, 1.0)]);
        assert!(matches!(
            cosine_columns(&r, 0, 1),
            Err(Error::ZeroColumn(1))
        ));
    }

    #[test]
    fn from_triplets_rejects_duplicates_and_negatives() {
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0)]),
            Err(Error::DuplicateEntry { row: 0, col: 0 })
        ));
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, &[(0, 0, -1.0)]),
            Err(Error::NegativeWeight { .. })
        ));
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, &[(0, 0, f64::NAN)]),
            Err(Error::NonFinite { .. })
        ));
        assert!(matches!(
            SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn csr_and_csc_views_agree() {
        let a = mat(
            3,
            3,
            &[(0, 1, 2.0), (1, 0, 3.0), (1, 2, 4.0), (2, 1, 5.0)],
        );
        let from_rows: Vec<_> = a.triplets().collect();
        let mut from_cols: Vec<_> = (0..a.n_cols())
            .flat_map(|j| a.col(j).map(move |(i, v)| (i, j, v)).collect::<Vec<_>>())
            .collect();
        from_cols.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        assert_eq!(from_rows, from_cols);
    }
}
