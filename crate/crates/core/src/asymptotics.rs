//! Joint asymptotic covariance of `(vec U_hat, vec V_hat, vec Sigma_hat)` under
//! separability, and the covariance `W` of `vec(V_hat (x) U_hat - Sigma_hat)`
//! obtained from it by the delta method.
//!
//! All blocks are dense. With `p = K^2 + I^2` and `R = K I`, `Gamma` is
//! `(p + R^2) x (p + R^2)` and `W` is `R^2 x R^2`; [`AsymptoticsConfig::max_r`]
//! bounds `R` before anything of that size is allocated.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt, kron, kron_sym, sqrt_psd, sym_eigen, sym_pinv, SymMatrix};
use crate::qmatrices::QMatrixSet;
use crate::scalar::Scalar;

/// Default bound on `R = K * I` for assembling `Gamma` and `W`.
pub const DEFAULT_MAX_R: usize = 30;

#[derive(Clone, Debug)]
pub struct AsymptoticsConfig {
    /// Relative eigenvalue cutoff for every generalized inverse.
    pub rtol: f64,
    pub max_r: usize,
}

impl AsymptoticsConfig {
    pub fn for_scalar<T: Scalar>() -> Self {
        AsymptoticsConfig {
            rtol: T::DEFAULT_RTOL,
            max_r: DEFAULT_MAX_R,
        }
    }
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self::for_scalar::<f64>()
    }
}

/// Generalized information matrices entering `Gamma`.
#[derive(Clone, Debug)]
pub struct FisherBlocks<T: Scalar> {
    /// Unconstrained information of `(vec U, vec V)`.
    pub info_uv: SymMatrix<T>,
    /// Asymptotic covariance of `(vec U_hat, vec V_hat)` under `tr(U) = K`,
    /// i.e. the generalized inverse of the constrained information.
    pub info_uv_constrained_pinv: SymMatrix<T>,
    /// Information of `vec Sigma`.
    pub info_sigma: SymMatrix<T>,
    /// Orthonormal basis of the complement of the trace-constraint gradient.
    pub d_constraint: DMatrix<T>,
}

/// `Gamma`, stored as its three distinct blocks.
#[derive(Clone, Debug)]
pub struct JointAsymptoticCov<T: Scalar> {
    pub k: usize,
    pub i: usize,
    /// `(K^2 + I^2)` square block for `(vec U_hat, vec V_hat)`.
    pub uv: SymMatrix<T>,
    /// `(K^2 + I^2) x R^2` cross block.
    pub cross: DMatrix<T>,
    /// `R^2` square block for `vec Sigma_hat`.
    pub sigma: SymMatrix<T>,
}

impl<T: Scalar> JointAsymptoticCov<T> {
    /// Assembles the full symmetric matrix.
    pub fn full(&self) -> SymMatrix<T> {
        let p = self.uv.dim();
        let r2 = self.sigma.dim();
        let mut g = DMatrix::zeros(p + r2, p + r2);
        g.view_mut((0, 0), (p, p)).copy_from(self.uv.as_matrix());
        g.view_mut((0, p), (p, r2)).copy_from(&self.cross);
        g.view_mut((p, 0), (r2, p)).copy_from(&self.cross.transpose());
        g.view_mut((p, p), (r2, r2)).copy_from(self.sigma.as_matrix());
        SymMatrix::symmetrized(g)
    }
}

/// Asymptotic covariance of `vec(V_hat (x) U_hat - Sigma_hat)` and its spectrum.
#[derive(Clone, Debug)]
pub struct WMatrix<T: Scalar> {
    pub w: SymMatrix<T>,
    /// Eigenvalues in descending order, negatives within tolerance clamped to zero.
    pub eigenvalues: Vec<T>,
    pub w_pinv: SymMatrix<T>,
    pub rank: usize,
}

/// `KI(KI+1)/2 - K(K+1)/2 - I(I+1)/2 + 1`.
pub fn degrees_of_freedom(k: usize, i: usize) -> usize {
    let r = k * i;
    r * (r + 1) / 2 + 1 - k * (k + 1) / 2 - i * (i + 1) / 2
}

fn check_dims<T: Scalar>(u: &SymMatrix<T>, v: &SymMatrix<T>, q: &QMatrixSet<T>) -> Result<()> {
    if u.dim() != q.k || v.dim() != q.i {
        return Err(Error::Dimension(format!(
            "U is {0}x{0}, V is {1}x{1}, Q matrices built for K={2}, I={3}",
            u.dim(),
            v.dim(),
            q.k,
            q.i
        )));
    }
    Ok(())
}

fn check_trace<T: Scalar>(u: &SymMatrix<T>) -> Result<()> {
    let k = u.dim() as f64;
    let t = u.trace().as_f64();
    if (t - k).abs() > 1e-6 * k.max(1.0) {
        return Err(Error::Precondition(format!(
            "asymptotic covariance is defined under tr(U) = K; got tr(U) = {t} for K = {k}"
        )));
    }
    Ok(())
}

fn check_size(k: usize, i: usize, cfg: &AsymptoticsConfig) -> Result<()> {
    if k * i > cfg.max_r {
        return Err(Error::TooLarge {
            what: "R = K*I for the asymptotic covariance",
            value: k * i,
            limit: cfg.max_r,
        });
    }
    Ok(())
}

fn inv_sqrt_pd<T: Scalar>(a: &SymMatrix<T>, rtol: f64, what: &'static str) -> Result<DMatrix<T>> {
    if a.as_matrix().clone().cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(what));
    }
    Ok(inv_sqrt(a, rtol)?.into_inner())
}

/// `blockdiag(U^{-1/2} (x) U^{-1/2}, V^{-1/2} (x) V^{-1/2})`.
fn whitening_block<T: Scalar>(u: &SymMatrix<T>, v: &SymMatrix<T>, rtol: f64) -> Result<DMatrix<T>> {
    let us = inv_sqrt_pd(u, rtol, "spatial factor U")?;
    let vs = inv_sqrt_pd(v, rtol, "temporal factor V")?;
    let (k2, i2) = (us.nrows().pow(2), vs.nrows().pow(2));
    let mut b = DMatrix::zeros(k2 + i2, k2 + i2);
    b.view_mut((0, 0), (k2, k2)).copy_from(&kron(&us, &us));
    b.view_mut((k2, k2), (i2, i2)).copy_from(&kron(&vs, &vs));
    Ok(b)
}

/// Unconstrained information of `(vec U, vec V)`.
pub fn fisher_uv<T: Scalar>(
    u: &SymMatrix<T>,
    v: &SymMatrix<T>,
    q: &QMatrixSet<T>,
    rtol: f64,
) -> Result<SymMatrix<T>> {
    check_dims(u, v, q)?;
    let (k, i) = (q.k, q.i);
    let (k2, i2) = (k * k, i * i);
    let cross = T::of_usize(k * i).sqrt();
    let mut mid = DMatrix::zeros(k2 + i2, k2 + i2);
    mid.view_mut((0, 0), (k2, k2)).copy_from(&(&q.q_k * T::of_usize(i)));
    mid.view_mut((0, k2), (k2, i2)).copy_from(&(&q.q_cross * cross));
    mid.view_mut((k2, 0), (i2, k2)).copy_from(&(q.q_cross_t() * cross));
    mid.view_mut((k2, k2), (i2, i2)).copy_from(&(&q.q_i * T::of_usize(k)));
    let b = whitening_block(u, v, rtol)?;
    Ok(SymMatrix::symmetrized(&b * mid * &b * T::of(0.5)))
}

/// Unit gradient of `tr(U) = K` in `(vec U, vec V)` coordinates.
pub fn constraint_gradient<T: Scalar>(k: usize, i: usize) -> DVector<T> {
    let mut g = DVector::zeros(k * k + i * i);
    let w = T::one() / T::of_usize(k).sqrt();
    for d in 0..k {
        g[d + d * k] = w;
    }
    g
}

/// Columns 2.. of the Householder reflection sending the constraint gradient to `e_1`.
pub fn constraint_basis<T: Scalar>(k: usize, i: usize) -> DMatrix<T> {
    let g = constraint_gradient::<T>(k, i);
    let p = g.len();
    let mut w = g.clone();
    w[0] -= T::one();
    let wn = w.norm_squared();
    let mut h = DMatrix::identity(p, p);
    if wn > T::zero() {
        h.ger(-T::of(2.0) / wn, &w, &w, T::one());
    }
    h.columns(1, p - 1).into_owned()
}

/// Information of `vec Sigma`: `(1/2) (S (x) S) Q_R (S (x) S)` with `S = Sigma^{-1/2}`.
pub fn fisher_sigma<T: Scalar>(sigma: &SymMatrix<T>, q_r: &DMatrix<T>, rtol: f64) -> Result<SymMatrix<T>> {
    let r = sigma.dim();
    if q_r.shape() != (r * r, r * r) {
        return Err(Error::Dimension(format!(
            "Q_R is {}x{}, expected {1}x{1}",
            q_r.nrows(),
            r * r
        )));
    }
    let s = inv_sqrt_pd(sigma, rtol, "Sigma")?;
    let b = kron(&s, &s);
    Ok(SymMatrix::symmetrized(&b * q_r * &b * T::of(0.5)))
}

pub fn fisher_blocks<T: Scalar>(
    u: &SymMatrix<T>,
    v: &SymMatrix<T>,
    sigma: &SymMatrix<T>,
    q: &QMatrixSet<T>,
    rtol: f64,
) -> Result<FisherBlocks<T>> {
    let info_uv = fisher_uv(u, v, q, rtol)?;
    let d = constraint_basis::<T>(q.k, q.i);
    let reduced = SymMatrix::symmetrized(d.transpose() * info_uv.as_matrix() * &d);
    let reduced_pinv = sym_pinv(&reduced, rtol)?.pseudo_inverse;
    // (D (D' I D)^+ D')^+ inverted once more is D (D' I D)^+ D' itself.
    let constrained_pinv = SymMatrix::symmetrized(&d * reduced_pinv.as_matrix() * d.transpose());
    let info_sigma = fisher_sigma(sigma, &q.q_r, rtol)?;
    Ok(FisherBlocks {
        info_uv,
        info_uv_constrained_pinv: constrained_pinv,
        info_sigma,
        d_constraint: d,
    })
}

/// `Gamma` at `(U, V, Sigma)`; under the null `Sigma = V (x) U` and `tr(U) = K`.
pub fn joint_gamma<T: Scalar>(
    u: &SymMatrix<T>,
    v: &SymMatrix<T>,
    sigma: &SymMatrix<T>,
    q: &QMatrixSet<T>,
    cfg: &AsymptoticsConfig,
) -> Result<JointAsymptoticCov<T>> {
    check_dims(u, v, q)?;
    check_size(q.k, q.i, cfg)?;
    check_trace(u)?;
    if sigma.dim() != q.r {
        return Err(Error::Dimension(format!("Sigma is {0}x{0}, expected R = {1}", sigma.dim(), q.r)));
    }
    let blocks = fisher_blocks(u, v, sigma, q, cfg.rtol)?;
    let (k, i, r) = (q.k, q.i, q.r);
    let (k2, i2, r2) = (k * k, i * i, r * r);

    // S (x) S with S = Sigma^{-1/2} is invertible and commutes with Q_R, so the
    // generalized inverse of (1/2)(S (x) S) Q_R (S (x) S) is 2 (S (x) S)^{-1} Q_R (S (x) S)^{-1}.
    // Forming it directly avoids the squared condition number of the information.
    let root = sqrt_psd(sigma, cfg.rtol)?.into_inner();
    let bs_inv = kron(&root, &root);
    let q_bs_inv = &q.q_r * &bs_inv;
    let sigma_pinv = SymMatrix::symmetrized(&bs_inv * &q_bs_inv * T::of(2.0));

    let mut stacked = DMatrix::zeros(k2 + i2, r2);
    stacked
        .view_mut((0, 0), (k2, r2))
        .copy_from(&(q.q_tilde.transpose() * T::of_usize(i).sqrt()));
    stacked
        .view_mut((k2, 0), (i2, r2))
        .copy_from(&(q.q_breve.transpose() * T::of_usize(k).sqrt()));
    let b = whitening_block(u, v, cfg.rtol)?;
    let a = blocks.info_uv_constrained_pinv.as_matrix();
    let cross = a * b * stacked * q_bs_inv;

    Ok(JointAsymptoticCov {
        k,
        i,
        uv: blocks.info_uv_constrained_pinv,
        cross,
        sigma: sigma_pinv,
    })
}

/// Rows `vec(V (x) 1_{k,l})^T` in `vec U` order: the Jacobian of `vec(V (x) U)` in `vec U`.
pub fn gradient_u<T: Scalar>(v: &SymMatrix<T>, k: usize) -> DMatrix<T> {
    let i = v.dim();
    let r = k * i;
    let mut g = DMatrix::zeros(k * k, r * r);
    for l in 0..k {
        for kk in 0..k {
            let row = kk + l * k;
            for a in 0..i {
                for b in 0..i {
                    let (rr, cc) = (a * k + kk, b * k + l);
                    g[(row, rr + cc * r)] = v.as_matrix()[(a, b)];
                }
            }
        }
    }
    g
}

/// Rows `vec(1_{i,j} (x) U)^T` in `vec V` order: the Jacobian of `vec(V (x) U)` in `vec V`.
pub fn gradient_v<T: Scalar>(u: &SymMatrix<T>, i: usize) -> DMatrix<T> {
    let k = u.dim();
    let r = k * i;
    let mut g = DMatrix::zeros(i * i, r * r);
    for j in 0..i {
        for ii in 0..i {
            let row = ii + j * i;
            for c in 0..k {
                for rr in 0..k {
                    let (a, b) = (ii * k + rr, j * k + c);
                    g[(row, a + b * r)] = u.as_matrix()[(rr, c)];
                }
            }
        }
    }
    g
}

/// `W = J^T Gamma J` with `J = [G_U; G_V; -I]`.
pub fn w_matrix<T: Scalar>(
    u: &SymMatrix<T>,
    v: &SymMatrix<T>,
    gamma: &JointAsymptoticCov<T>,
    rtol: f64,
) -> Result<WMatrix<T>> {
    check_trace(u)?;
    let (k, i) = (gamma.k, gamma.i);
    if u.dim() != k || v.dim() != i {
        return Err(Error::Dimension("U, V do not match Gamma".into()));
    }
    let (k2, i2) = (k * k, i * i);
    let r2 = (k * i).pow(2);
    let mut g = DMatrix::zeros(k2 + i2, r2);
    g.view_mut((0, 0), (k2, r2)).copy_from(&gradient_u(v, k));
    g.view_mut((k2, 0), (i2, r2)).copy_from(&gradient_v(u, i));

    let gt_cross = g.transpose() * &gamma.cross;
    let w = g.transpose() * gamma.uv.as_matrix() * &g - &gt_cross - gt_cross.transpose()
        + gamma.sigma.as_matrix();
    let w = SymMatrix::symmetrized(w);
    spectrum(w, rtol)
}

fn spectrum<T: Scalar>(w: SymMatrix<T>, rtol: f64) -> Result<WMatrix<T>> {
    let eig = sym_eigen(&w);
    let cutoff = eig.max_abs() * T::of(rtol);
    let mut eigenvalues = Vec::with_capacity(eig.values.len());
    for &l in &eig.values {
        if l < -cutoff {
            return Err(Error::NotPsd("W", l.as_f64()));
        }
        eigenvalues.push(l.max(T::zero()));
    }
    let pinv = crate::linalg::pinv_from_eigen(&eig, rtol);
    Ok(WMatrix {
        w,
        eigenvalues,
        w_pinv: pinv.pseudo_inverse,
        rank: pinv.rank,
    })
}

/// `W` evaluated at the null point `(U, V, V (x) U)`.
pub fn null_w_matrix<T: Scalar>(
    u: &SymMatrix<T>,
    v: &SymMatrix<T>,
    cfg: &AsymptoticsConfig,
) -> Result<(JointAsymptoticCov<T>, WMatrix<T>)> {
    let (k, i) = (u.dim(), v.dim());
    check_size(k, i, cfg)?;
    let q = QMatrixSet::with_limit(k, i, cfg.max_r)?;
    let sigma = kron_sym(v, u);
    let gamma = joint_gamma(u, v, &sigma, &q, cfg)?;
    let w = w_matrix(u, v, &gamma, cfg.rtol)?;
    Ok((gamma, w))
}

/// `W` at the identity point `(I_K, I_I, I_{KI})`. Depends on `(K, I)` only.
pub fn identity_w_matrix<T: Scalar>(k: usize, i: usize, cfg: &AsymptoticsConfig) -> Result<WMatrix<T>> {
    null_w_matrix(&SymMatrix::identity(k), &SymMatrix::identity(i), cfg).map(|(_, w)| w)
}

/// Null `W` at `(U, V)` by congruence from the identity point,
/// `W(U, V) = (P (x) P) W(I, I) (P (x) P)'` with `P = V^{1/2} (x) U^{1/2}`.
///
/// Equal to [`null_w_matrix`] in exact arithmetic and PSD by construction.
/// The direct formula loses accuracy when `U` or `V` is ill-conditioned,
/// since the Fisher information then spans the square of their condition numbers.
pub fn null_w_matrix_congruent<T: Scalar>(
    u: &SymMatrix<T>,
    v: &SymMatrix<T>,
    w_identity: &WMatrix<T>,
    rtol: f64,
) -> Result<WMatrix<T>> {
    check_trace(u)?;
    let r = u.dim() * v.dim();
    if w_identity.w.dim() != r * r {
        return Err(Error::Dimension(format!(
            "identity W is {0}x{0}, expected {1}x{1}",
            w_identity.w.dim(),
            r * r
        )));
    }
    let p = kron_sym(&sqrt_psd(v, rtol)?, &sqrt_psd(u, rtol)?);
    let m = kron(p.as_matrix(), p.as_matrix());
    let w = SymMatrix::symmetrized(&m * w_identity.w.as_matrix() * m.transpose());
    spectrum(w, rtol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vectorize;
    use crate::testutil::{random_spd, random_spd_trace_normalized};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn degrees_of_freedom_examples() {
        assert_eq!(degrees_of_freedom(2, 2), 5);
        assert_eq!(degrees_of_freedom(3, 2), 13);
        assert_eq!(degrees_of_freedom(1, 1), 0);
        assert_eq!(degrees_of_freedom(4, 4), 136 - 10 - 10 + 1);
    }

    #[test]
    fn fisher_uv_scalar_case() {
        let q = QMatrixSet::<f64>::new(1, 1).unwrap();
        let one = SymMatrix::identity(1);
        let f = fisher_uv(&one, &one, &q, 1e-10).unwrap();
        assert!((f.as_matrix() - DMatrix::from_element(2, 2, 0.5)).amax() < 1e-15);
    }

    #[test]
    fn fisher_uv_identity_factors() {
        let q = QMatrixSet::<f64>::new(2, 3).unwrap();
        let f = fisher_uv(&SymMatrix::identity(2), &SymMatrix::identity(3), &q, 1e-10).unwrap();
        let m = f.as_matrix();
        assert!((m.view((0, 0), (4, 4)) - &q.q_k * 1.5).amax() < 1e-14);
        assert!((m.view((0, 4), (4, 9)) - &q.q_cross * (0.5 * 6f64.sqrt())).amax() < 1e-14);
        assert!((m.view((4, 4), (9, 9)) - &q.q_i * 1.0).amax() < 1e-14);
        assert!(fisher_uv(&SymMatrix::from_diagonal(&[1.0, -1.0]), &SymMatrix::identity(3), &q, 1e-10).is_err());
    }

    #[test]
    fn constraint_basis_properties() {
        for (k, i) in [(1, 1), (1, 3), (2, 2), (3, 2), (4, 3)] {
            let d = constraint_basis::<f64>(k, i);
            let g = constraint_gradient::<f64>(k, i);
            let p = k * k + i * i;
            assert_eq!(d.shape(), (p, p - 1));
            assert!((d.transpose() * &d - DMatrix::identity(p - 1, p - 1)).amax() < 1e-12);
            assert!((d.transpose() * &g).amax() < 1e-12);
            let proj = DMatrix::identity(p, p) - &g * g.transpose();
            assert!((&d * d.transpose() - proj).amax() < 1e-12);
        }
    }

    #[test]
    fn fisher_sigma_examples() {
        let q = QMatrixSet::<f64>::new(2, 2).unwrap();
        let f = fisher_sigma(&SymMatrix::identity(4), &q.q_r, 1e-10).unwrap();
        assert!((f.as_matrix() - &q.q_r * 0.5).amax() < 1e-15);
        let s2: f64 = 2.5;
        let f = fisher_sigma(&SymMatrix::from_diagonal(&[s2]), &DMatrix::from_element(1, 1, 1.0), 1e-10).unwrap();
        assert!((f.as_matrix()[(0, 0)] - 1.0 / (2.0 * s2 * s2)).abs() < 1e-15);
    }

    #[test]
    fn scalar_case_gamma_and_w() {
        let u = SymMatrix::<f64>::identity(1);
        let v = SymMatrix::from_diagonal(&[2.0]);
        let (gamma, w) = null_w_matrix(&u, &v, &AsymptoticsConfig::default()).unwrap();
        let uv = gamma.uv.as_matrix();
        assert!(uv[(0, 0)].abs() < 1e-14 && uv[(0, 1)].abs() < 1e-14);
        assert!((uv[(1, 1)] - 8.0).abs() < 1e-12);
        assert!((gamma.sigma.as_matrix()[(0, 0)] - 8.0).abs() < 1e-12);
        assert!(w.w.as_matrix()[(0, 0)].abs() < 1e-12);
        assert_eq!(w.rank, 0);
    }

    #[test]
    fn gamma_symmetric_psd_and_annihilates_constraint() {
        let u = SymMatrix::<f64>::identity(2);
        let v = SymMatrix::from_diagonal(&[1.0, 2.0]);
        let (gamma, _) = null_w_matrix(&u, &v, &AsymptoticsConfig::default()).unwrap();
        let full = gamma.full();
        let eig = sym_eigen(&full);
        let max = eig.max_abs();
        assert!(eig.values.iter().all(|&l| l > -1e-8 * max));
        let g = constraint_gradient::<f64>(2, 2);
        assert!((gamma.uv.as_matrix() * g).amax() < 1e-10);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (k, i) = (2, 3);
        let u = random_spd(&mut rng, k);
        let v = random_spd(&mut rng, i);
        let gu = gradient_u(&v, k);
        let gv = gradient_v(&u, i);
        assert_eq!(gu.nrows(), k * k);
        assert_eq!(gv.nrows(), i * i);
        let h = 1e-6;
        let f = |u: &DMatrix<f64>, v: &DMatrix<f64>| vectorize(&kron(v, u));
        for idx in 0..k * k {
            let mut up = u.as_matrix().clone();
            let mut um = u.as_matrix().clone();
            up[idx] += h;
            um[idx] -= h;
            let fd = (f(&up, v.as_matrix()) - f(&um, v.as_matrix())) / (2.0 * h);
            assert!((fd - gu.row(idx).transpose()).amax() < 1e-6);
        }
        for idx in 0..i * i {
            let mut vp = v.as_matrix().clone();
            let mut vm = v.as_matrix().clone();
            vp[idx] += h;
            vm[idx] -= h;
            let fd = (f(u.as_matrix(), &vp) - f(u.as_matrix(), &vm)) / (2.0 * h);
            assert!((fd - gv.row(idx).transpose()).amax() < 1e-6);
        }
    }

    #[test]
    fn w_rank_matches_degrees_of_freedom() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (k, i) in [(2, 2), (2, 3), (3, 2)] {
            let u = random_spd_trace_normalized(&mut rng, k);
            let v = random_spd(&mut rng, i);
            let (_, w) = null_w_matrix(&u, &v, &AsymptoticsConfig::default()).unwrap();
            assert_eq!(w.rank, degrees_of_freedom(k, i), "K={k} I={i}");
            assert!(w.eigenvalues.windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn rejects_unnormalized_u_and_oversized_problems() {
        let u = SymMatrix::from_diagonal(&[2.0, 2.0]);
        let v = SymMatrix::identity(2);
        assert!(matches!(
            null_w_matrix(&u, &v, &AsymptoticsConfig::default()),
            Err(Error::Precondition(_))
        ));
        let cfg = AsymptoticsConfig {
            max_r: 3,
            ..Default::default()
        };
        assert!(matches!(
            null_w_matrix(&SymMatrix::identity(2), &v, &cfg),
            Err(Error::TooLarge { .. })
        ));
    }
}
