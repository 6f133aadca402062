//! Dense linear-algebra conventions shared by every other module.
//!
//! `vec` stacks columns (space index fastest), matrix functions go through a
//! symmetric eigendecomposition with a fixed eigenvector sign convention, and
//! generalized inverses drop eigenvalues below `rtol * max |lambda|`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Real symmetric matrix. Symmetrized as `(A + A^T) / 2` on construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix<T: Scalar>(DMatrix<T>);

impl<T: Scalar> SymMatrix<T> {
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("symmetric matrix"));
        }
        Ok(Self::symmetrized(m))
    }

    /// Symmetrizes without validating finiteness.
    pub fn symmetrized(m: DMatrix<T>) -> Self {
        let half = T::of(0.5);
        let t = m.transpose();
        SymMatrix((m + t) * half)
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<T> {
        self.0
    }

    pub fn trace(&self) -> T {
        self.0.trace()
    }

    pub fn scale(&self, c: T) -> Self {
        SymMatrix(&self.0 * c)
    }

    pub fn eigen(&self) -> SymEigen<T> {
        sym_eigen(self)
    }

    /// Log-determinant via Cholesky; fails unless positive definite.
    pub fn logdet(&self) -> Result<T> {
        let chol = self
            .0
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("matrix in log-determinant"))?;
        let two = T::of(2.0);
        Ok(chol.l().diagonal().iter().map(|d| d.ln()).fold(T::zero(), |a, b| a + b) * two)
    }

    /// Inverse via Cholesky; fails unless positive definite.
    pub fn inverse_spd(&self) -> Result<Self> {
        let chol = self
            .0
            .clone()
            .cholesky()
            .ok_or(Error::NotPositiveDefinite("matrix inverse"))?;
        Ok(SymMatrix::symmetrized(chol.inverse()))
    }
}

impl<T: Scalar> AsRef<DMatrix<T>> for SymMatrix<T> {
    fn as_ref(&self) -> &DMatrix<T> {
        &self.0
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
///
/// Each eigenvector has its largest-magnitude entry positive (ties go to the
/// lowest index).
#[derive(Clone, Debug)]
pub struct SymEigen<T: Scalar> {
    pub values: Vec<T>,
    pub vectors: DMatrix<T>,
}

impl<T: Scalar> SymEigen<T> {
    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn vector(&self, j: usize) -> DVector<T> {
        self.vectors.column(j).into_owned()
    }
}

pub fn sym_eigen<T: Scalar>(a: &SymMatrix<T>) -> SymEigen<T> {
    let n = a.dim();
    if n == 0 {
        return SymEigen {
            values: Vec::new(),
            vectors: DMatrix::zeros(0, 0),
        };
    }
    let (eigenvalues, eigenvectors) = T::symmetric_eigen_raw(a.0.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eigenvalues[j]
            .partial_cmp(&eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut vectors = DMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eigenvalues[src]);
        let mut col = eigenvectors.column(src).into_owned();
        orient(&mut col);
        vectors.set_column(dst, &col);
    }
    SymEigen { values, vectors }
}

/// Flips `v` so its largest-magnitude entry (lowest index on ties) is positive.
pub fn orient<T: Scalar>(v: &mut DVector<T>) {
    let mut best = 0;
    let mut best_abs = T::zero();
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if !v.is_empty() && v[best] < T::zero() {
        v.neg_mut();
    }
}

/// Column-stacking `vec` operator.
pub fn vectorize<T: Scalar>(a: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize<T: Scalar>(v: &DVector<T>, rows: usize, cols: usize) -> Result<DMatrix<T>> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Kronecker product: block (i, j) of the result is `a[(i, j)] * b`.
pub fn kron<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (m, n) = a.shape();
    let (p, q) = b.shape();
    let mut out = DMatrix::zeros(m * p, n * q);
    for j in 0..n {
        for i in 0..m {
            let aij = a[(i, j)];
            if aij == T::zero() {
                continue;
            }
            let mut block = out.view_mut((i * p, j * q), (p, q));
            block.zip_apply(b, |o, x| *o = aij * x);
        }
    }
    out
}

/// `kron` for symmetric factors; the result is symmetric.
pub fn kron_sym<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> SymMatrix<T> {
    SymMatrix(kron(&a.0, &b.0))
}

/// Moore-Penrose inverse of a symmetric matrix and the spectrum it kept.
#[derive(Clone, Debug)]
pub struct PinvResult<T: Scalar> {
    pub pseudo_inverse: SymMatrix<T>,
    pub rank: usize,
    pub eigenvalues_kept: Vec<T>,
    pub cutoff_used: T,
}

fn check_rtol(rtol: f64) -> Result<()> {
    if !(rtol > 0.0 && rtol < 1.0) {
        return Err(Error::InvalidInput(format!("rtol must lie in (0, 1), got {rtol}")));
    }
    Ok(())
}

pub fn sym_pinv<T: Scalar>(a: &SymMatrix<T>, rtol: f64) -> Result<PinvResult<T>> {
    check_rtol(rtol)?;
    if a.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("pseudo-inverse input"));
    }
    let eig = sym_eigen(a);
    Ok(pinv_from_eigen(&eig, rtol))
}

pub(crate) fn pinv_from_eigen<T: Scalar>(eig: &SymEigen<T>, rtol: f64) -> PinvResult<T> {
    let cutoff = eig.max_abs() * T::of(rtol);
    let mut kept = Vec::new();
    let mut cols = Vec::new();
    for (j, &lambda) in eig.values.iter().enumerate() {
        if lambda.abs() > cutoff && lambda != T::zero() {
            kept.push(lambda);
            cols.push(j);
        }
    }
    let weights: Vec<T> = kept.iter().map(|&l| T::one() / l).collect();
    PinvResult {
        pseudo_inverse: spectral_sum(&eig.vectors, &cols, &weights),
        rank: kept.len(),
        eigenvalues_kept: kept,
        cutoff_used: cutoff,
    }
}

/// `sum_j w_j v_j v_j^T` over the selected eigenvector columns.
fn spectral_sum<T: Scalar>(vectors: &DMatrix<T>, cols: &[usize], weights: &[T]) -> SymMatrix<T> {
    let n = vectors.nrows();
    let basis = vectors.select_columns(cols);
    let mut scaled = basis.clone();
    for (c, &w) in weights.iter().enumerate() {
        scaled.column_mut(c).scale_mut(w);
    }
    if cols.is_empty() {
        return SymMatrix(DMatrix::zeros(n, n));
    }
    SymMatrix::symmetrized(scaled * basis.transpose())
}

/// Symmetric inverse square root on the range of a PSD matrix.
pub fn inv_sqrt<T: Scalar>(a: &SymMatrix<T>, rtol: f64) -> Result<SymMatrix<T>> {
    psd_power(a, rtol, true)
}

/// Symmetric square root of a PSD matrix.
pub fn sqrt_psd<T: Scalar>(a: &SymMatrix<T>, rtol: f64) -> Result<SymMatrix<T>> {
    psd_power(a, rtol, false)
}

fn psd_power<T: Scalar>(a: &SymMatrix<T>, rtol: f64, inverse: bool) -> Result<SymMatrix<T>> {
    check_rtol(rtol)?;
    if a.0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix square root input"));
    }
    let eig = sym_eigen(a);
    let cutoff = eig.max_abs() * T::of(rtol);
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    for (j, &lambda) in eig.values.iter().enumerate() {
        if lambda < -cutoff {
            return Err(Error::NotPsd("matrix square root input", lambda.as_f64()));
        }
        if lambda > cutoff {
            let s = lambda.sqrt();
            cols.push(j);
            weights.push(if inverse { T::one() / s } else { s });
        }
    }
    Ok(spectral_sum(&eig.vectors, &cols, &weights))
}

/// Permutation matrix `C` with `C vec(A) = vec(A^T)` for every `m x n` matrix `A`.
pub fn commutation_matrix<T: Scalar>(m: usize, n: usize) -> DMatrix<T> {
    let mut c = DMatrix::zeros(m * n, m * n);
    for i in 0..m {
        for j in 0..n {
            c[(j + i * n, i + j * m)] = T::one();
        }
    }
    c
}

/// Relative Frobenius distance `|new - old|_F / |old|_F` (absolute when `old` is zero).
pub fn rel_change<T: Scalar>(new: &DMatrix<T>, old: &DMatrix<T>) -> T {
    let num = (new - old).norm();
    let den = old.norm();
    if den > T::zero() {
        num / den
    } else {
        num
    }
}

/// Ratio of extreme eigenvalues; infinite when the smallest is not positive.
pub fn condition_number<T: Scalar>(a: &SymMatrix<T>) -> f64 {
    let eig = sym_eigen(a);
    let max = eig.values.first().copied().unwrap_or_else(T::zero).as_f64();
    let min = eig.values.last().copied().unwrap_or_else(T::zero).as_f64();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}
