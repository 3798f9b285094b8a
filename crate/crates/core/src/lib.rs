//! Finite-dimensional probability algebras, spectral calculus, correlation
//! operators and their factorisations, Karhunen–Loève / POD truncation,
//! white-noise sampling and a stochastic Galerkin solver.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algebra;
pub mod correlation;
pub mod error;
pub mod galerkin;
pub mod io;
mod linalg;
pub mod spectral;
pub mod weak_dist;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
