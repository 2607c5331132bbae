//! Sparse symmetric matrices, a reusable envelope Cholesky factorization and a
//! matrix-free conjugate gradient solver.

mod cg;
mod cholesky;
mod sparse;

pub use cg::{cg_solve, CgOutcome};
pub use cholesky::Factorization;
pub use sparse::SparseSymMatrix;
