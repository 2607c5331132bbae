use crate::error::{Error, Result};

/// Square sparse matrix in compressed sparse row layout, structurally and
/// numerically symmetric.
///
/// Column indices within a row are strictly increasing. Products are summed in
/// ascending column order so `spmv` is bit-reproducible.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSymMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSymMatrix {
    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates in
    /// the order given. Fails if the result is not exactly symmetric.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let m = Self::from_triplets_unchecked(n, triplets)?;
        if !m.is_symmetric() {
            return Err(Error::InvalidParameter(
                "assembled matrix is not symmetric".into(),
            ));
        }
        Ok(m)
    }

    fn from_triplets_unchecked(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in triplets {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: i.max(j) + 1,
                });
            }
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        // bucket by row, stable so duplicates keep their insertion order
        let mut cursor = counts.clone();
        let mut by_row = vec![(0usize, 0.0f64); triplets.len()];
        for &(i, j, v) in triplets {
            by_row[cursor[i]] = (j, v);
            cursor[i] += 1;
        }

        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            let row = &mut by_row[counts[i]..counts[i + 1]];
            row.sort_by_key(|&(j, _)| j);
            let mut k = 0;
            while k < row.len() {
                let j = row[k].0;
                let mut sum = 0.0;
                while k < row.len() && row[k].0 == j {
                    sum += row[k].1;
                    k += 1;
                }
                col_idx.push(j);
                values.push(sum);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Dense row-major input; entries exactly equal to zero are dropped.
    pub fn from_dense(n: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: dense.len(),
            });
        }
        let triplets: Vec<_> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter_map(|(i, j)| {
                let v = dense[i * n + j];
                (v != 0.0).then_some((i, j, v))
            })
            .collect();
        Self::from_triplets(n, &triplets)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).all(|(&j, &v)| {
                let (cj, vj) = self.row(j);
                matches!(cj.binary_search(&i), Ok(k) if vj[k] == v)
            })
        })
    }

    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.n];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        if y.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: y.len(),
            });
        }
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            *yi = acc;
        }
        Ok(())
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let ay = self.spmv(y)?;
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(x.iter().zip(&ay).map(|(a, b)| a * b).sum())
    }

    /// Principal submatrix on `indices` (which must be strictly increasing).
    pub fn principal_submatrix(&self, indices: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.n];
        for (k, &i) in indices.iter().enumerate() {
            map[i] = k;
        }
        let mut row_ptr = Vec::with_capacity(indices.len() + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for &i in indices {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if map[j] != usize::MAX {
                    col_idx.push(map[j]);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n: indices.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[i * self.n + j] = v;
            }
        }
        d
    }

    /// Index of the first stored column in each row (the row's envelope start).
    pub(crate) fn first_columns(&self) -> Vec<usize> {
        (0..self.n)
            .map(|i| {
                let (cols, _) = self.row(i);
                cols.first().copied().unwrap_or(i).min(i)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_spmv() {
        let a = SparseSymMatrix::identity(3);
        assert_eq!(a.spmv(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_matrix_annihilates() {
        let a = SparseSymMatrix::zeros(4);
        assert_eq!(a.spmv(&[1.0, -2.0, 3.5, 7.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn single_dof_stiffness() {
        // two P1 elements on (0,1), one interior node: 1/h + 1/h with h = 1/2
        let a = SparseSymMatrix::from_dense(1, &[4.0]).unwrap();
        assert_eq!(a.spmv(&[1.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = SparseSymMatrix::identity(3);
        assert!(matches!(
            a.spmv(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn duplicates_are_summed() {
        let a = SparseSymMatrix::from_triplets(
            2,
            &[(0, 0, 1.0), (0, 1, 0.5), (1, 0, 0.5), (0, 0, 2.0), (1, 1, 1.0)],
        )
        .unwrap();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 4);
    }

    #[test]
    fn asymmetric_triplets_rejected() {
        assert!(SparseSymMatrix::from_triplets(2, &[(0, 1, 1.0)]).is_err());
    }

    #[test]
    fn submatrix_picks_interior() {
        let dense = [2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0];
        let a = SparseSymMatrix::from_dense(3, &dense).unwrap();
        let s = a.principal_submatrix(&[0, 2]);
        assert_eq!(s.to_dense(), vec![2.0, 0.0, 0.0, 2.0]);
    }
}
