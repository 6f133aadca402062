//! Tests of Kronecker separability for replicated space-time covariances.
//!
//! The multivariate core works on `N` replicates of a `K x I` matrix (rows are
//! spatial locations, columns time points or basis indices) and is generic
//! over the floating-point type through [`Scalar`]. The functional front ends
//! reduce curves observed at fixed locations to such score matrices, and the
//! simulation module generates Gneiting-class space-time fields.
//!
//! Concrete `f64` aliases are provided at the crate root for the common case.

pub mod asymptotics;
pub mod error;
pub mod functional;
pub mod ingest;
pub mod linalg;
pub mod matnorm;
pub mod qmatrices;
pub mod scalar;
pub mod septest;
pub mod simulate;

// Links the system BLAS/LAPACK used by the eigensolver.
use openblas_src as _;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SymMatrixF64 = linalg::SymMatrix<f64>;
pub type SymMatrixF32 = linalg::SymMatrix<f32>;

#[cfg(test)]
pub(crate) mod testutil;
