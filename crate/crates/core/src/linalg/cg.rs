use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual `‖A x − b‖₂ / ‖b‖₂`.
    pub residual: f64,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Preconditioned conjugate gradients for a symmetric positive (semi)definite
/// operator given as a callback `apply(x, out)`.
///
/// `jacobi` is an optional diagonal preconditioner; entries that are not
/// strictly positive are treated as 1. The system may be singular as long as
/// it is consistent, in which case the iterate stays in the range reachable
/// from zero. Stops once `‖A x − b‖₂ ≤ tol·‖b‖₂`.
pub fn cg_solve<F>(
    mut apply: F,
    b: &[f64],
    jacobi: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<CgOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = b.len();
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("cg tolerance must be > 0, got {tol}")));
    }
    if let Some(d) = jacobi {
        if d.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: d.len(),
            });
        }
    }
    let inv_diag: Vec<f64> = match jacobi {
        Some(d) => d.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect(),
        None => vec![1.0; n],
    };

    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = tol * b_norm;

    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    let mut best = x.clone();
    let mut best_res = b_norm;

    for it in 1..=max_iter {
        apply(&p, &mut ap)?;
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // breakdown: search direction in the operator's kernel
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let r_norm = dot(&r, &r).sqrt();
        if r_norm < best_res {
            best_res = r_norm;
            best.copy_from_slice(&x);
        }
        if r_norm <= target {
            return Ok(CgOutcome {
                x,
                iterations: it,
                residual: r_norm / b_norm,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }

    Err(Error::CgNotConverged {
        iterations: max_iter,
        residual: best_res / b_norm,
        best,
    })
}
