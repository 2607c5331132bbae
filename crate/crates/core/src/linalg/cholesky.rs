use super::sparse::SparseSymMatrix;
use crate::error::{Error, Result};

/// Envelope (skyline) Cholesky factor `A = L Lᵀ`.
///
/// Row `i` of `L` is stored densely from its first nonzero column up to the
/// diagonal. Fill stays inside the envelope, so banded stiffness matrices from
/// structured meshes factor in `O(n·b²)` and solve in `O(n·b)`.
#[derive(Clone, Debug)]
pub struct Factorization {
    n: usize,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl Factorization {
    pub fn new(a: &SparseSymMatrix) -> Result<Self> {
        let n = a.dim();
        let first = a.first_columns();
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for i in 0..n {
            offset.push(offset[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; offset[n]];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    data[offset[i] + j - first[i]] = v;
                }
            }
        }

        let mut f = Self {
            n,
            first,
            offset,
            data,
        };
        for i in 0..n {
            let fi = f.first[i];
            for j in fi..i {
                let fj = f.first[j];
                let start = fi.max(fj);
                let mut s = f.data[f.offset[i] + j - fi];
                for k in start..j {
                    s -= f.data[f.offset[i] + k - fi] * f.data[f.offset[j] + k - fj];
                }
                let ljj = f.data[f.offset[j] + j - fj];
                f.data[f.offset[i] + j - fi] = s / ljj;
            }
            let mut d = f.data[f.offset[i] + i - fi];
            for k in fi..i {
                let l = f.data[f.offset[i] + k - fi];
                d -= l * l;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotSpd { row: i });
            }
            f.data[f.offset[i] + i - fi] = d.sqrt();
        }
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        // L y = b
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            let mut s = x[i];
            for k in fi..i {
                s -= row[k - fi] * x[k];
            }
            x[i] = s / row[i - fi];
        }
        // Lᵀ x = y, column sweep over the stored rows
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.offset[i]..self.offset[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for k in fi..i {
                x[k] -= row[k - fi] * xi;
            }
        }
        Ok(())
    }
}
