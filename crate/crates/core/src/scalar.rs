use std::fmt::{Debug, Display};

use nalgebra::{DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point type the estimation and testing machinery is generic over.
///
/// Implemented for `f32` and `f64`. The associated constants carry the
/// precision-dependent defaults (convergence tolerance of the flip-flop
/// iteration, relative eigenvalue cutoff of generalized inverses).
pub trait Scalar:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Default relative-change tolerance for iterative estimators.
    const DEFAULT_TOL: f64;
    /// Default eigenvalue cutoff, relative to the largest absolute eigenvalue.
    const DEFAULT_RTOL: f64;

    /// Unsorted eigenvalues and eigenvectors (as columns) of a symmetric matrix.
    fn symmetric_eigen_raw(m: DMatrix<Self>) -> (DVector<Self>, DMatrix<Self>);

    #[inline]
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        <Self as FromPrimitive>::from_usize(x).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    fn symmetric_eigen_raw(m: DMatrix<Self>) -> (DVector<Self>, DMatrix<Self>) {
        let e = nalgebra_lapack::SymmetricEigen::new(m);
        (e.eigenvalues, e.eigenvectors)
    }

    const DEFAULT_TOL: f64 = 1e-5;
    const DEFAULT_RTOL: f64 = 1e-5;
}

impl Scalar for f64 {
    fn symmetric_eigen_raw(m: DMatrix<Self>) -> (DVector<Self>, DMatrix<Self>) {
        let e = nalgebra_lapack::SymmetricEigen::new(m);
        (e.eigenvalues, e.eigenvectors)
    }

    const DEFAULT_TOL: f64 = 1e-8;
    const DEFAULT_RTOL: f64 = 1e-10;
}
