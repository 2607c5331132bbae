//! Bregman iterative regularization for box-constrained optimal control of
//! the Poisson equation.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod bregman;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod linalg;
pub mod problem;
pub mod ssn;
pub mod stopping;

pub use error::{Error, Result};
