//! Maximum-likelihood estimation for replicated matrix-variate normal data.
//!
//! The unrestricted estimate is the sample covariance of `vec(X_n)` with
//! divisor `N`. The separable estimate `Sigma = V (x) U` is computed by the
//! flip-flop iteration started at `U_0 = I_K`, with `tr(U) = K` imposed after
//! every spatial update.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{condition_number, kron_sym, rel_change, vectorize, SymMatrix};
use crate::scalar::Scalar;

/// `N` replicates of a `K x I` real matrix (rows: space, columns: time or basis index).
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicatedMatrixSample<T: Scalar> {
    k: usize,
    i: usize,
    data: Vec<DMatrix<T>>,
}

impl<T: Scalar> ReplicatedMatrixSample<T> {
    pub fn new(data: Vec<DMatrix<T>>) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 replicates, got {}",
                data.len()
            )));
        }
        let (k, i) = data[0].shape();
        if k == 0 || i == 0 {
            return Err(Error::InvalidInput("replicates must be non-empty matrices".into()));
        }
        if let Some((n, x)) = data.iter().enumerate().find(|(_, x)| x.shape() != (k, i)) {
            return Err(Error::Dimension(format!(
                "replicate {n} is {}x{}, expected {k}x{i}",
                x.nrows(),
                x.ncols()
            )));
        }
        if data.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("replicated sample"));
        }
        Ok(ReplicatedMatrixSample { k, i, data })
    }

    pub fn n(&self) -> usize {
        self.data.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn i(&self) -> usize {
        self.i
    }

    pub fn replicates(&self) -> &[DMatrix<T>] {
        &self.data
    }

    pub fn mean(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.k, self.i);
        for x in &self.data {
            m += x;
        }
        m / T::of_usize(self.n())
    }

    /// Replicates with the sample mean subtracted.
    pub fn centered(&self) -> Vec<DMatrix<T>> {
        let m = self.mean();
        self.data.iter().map(|x| x - &m).collect()
    }

    /// Applies `f` to every replicate.
    pub fn map(&self, f: impl Fn(&DMatrix<T>) -> DMatrix<T>) -> Result<Self> {
        Self::new(self.data.iter().map(f).collect())
    }
}

/// Unrestricted MLEs of the mean and of `Cov(vec X)`.
#[derive(Clone, Debug)]
pub struct FullCovEstimate<T: Scalar> {
    pub sigma_hat: SymMatrix<T>,
    pub m_hat: DMatrix<T>,
}

pub fn estimate_mean_and_sigma<T: Scalar>(sample: &ReplicatedMatrixSample<T>) -> FullCovEstimate<T> {
    let m_hat = sample.mean();
    let r = sample.k * sample.i;
    let mut acc = DMatrix::zeros(r, r);
    for x in sample.replicates() {
        let v: DVector<T> = vectorize(&(x - &m_hat));
        acc.ger(T::one(), &v, &v, T::one());
    }
    FullCovEstimate {
        sigma_hat: SymMatrix::symmetrized(acc / T::of_usize(sample.n())),
        m_hat,
    }
}

#[derive(Clone, Debug)]
pub struct FlipFlopConfig {
    /// Stop once the larger relative Frobenius change of `U` and `V` drops below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Updates whose Gram matrix exceeds this condition number abort the fit.
    pub max_condition: f64,
    /// Record the log-likelihood after every full iteration.
    pub record_loglik: bool,
}

impl FlipFlopConfig {
    pub fn for_scalar<T: Scalar>() -> Self {
        FlipFlopConfig {
            tol: T::DEFAULT_TOL,
            max_iter: 200,
            max_condition: (0.01 / T::default_epsilon().as_f64()).min(1e12),
            record_loglik: false,
        }
    }
}

impl Default for FlipFlopConfig {
    fn default() -> Self {
        Self::for_scalar::<f64>()
    }
}

/// Separable covariance estimate, normalized so that `tr(u_hat) = K`.
#[derive(Clone, Debug)]
pub struct SeparableCovEstimate<T: Scalar> {
    pub u_hat: SymMatrix<T>,
    pub v_hat: SymMatrix<T>,
    pub iterations: usize,
    pub converged: bool,
    pub final_rel_change: f64,
    /// Log-likelihood at `(U_i, V_i)`, starting with `i = 0`; empty unless requested.
    pub loglik_trace: Vec<f64>,
}

impl<T: Scalar> SeparableCovEstimate<T> {
    /// The fitted `V (x) U`.
    pub fn kron(&self) -> SymMatrix<T> {
        kron_sym(&self.v_hat, &self.u_hat)
    }
}

/// Cholesky factor of an update's input, after checking its conditioning.
fn checked_cholesky<T: Scalar>(
    a: &SymMatrix<T>,
    what: &'static str,
    iteration: usize,
    max_condition: f64,
) -> Result<nalgebra::Cholesky<T, nalgebra::Dyn>> {
    let condition = condition_number(a);
    if !(condition <= max_condition) {
        return Err(Error::Singular {
            what,
            iteration,
            condition,
        });
    }
    a.as_matrix().clone().cholesky().ok_or(Error::Singular {
        what,
        iteration,
        condition,
    })
}

fn temporal_from_factor<T: Scalar>(
    centered: &[DMatrix<T>],
    chol: &nalgebra::Cholesky<T, nalgebra::Dyn>,
) -> SymMatrix<T> {
    let (k, i) = centered[0].shape();
    let mut acc = DMatrix::zeros(i, i);
    for x in centered {
        let y = chol.l().solve_lower_triangular(x).expect("factor is nonsingular");
        acc.gemm_tr(T::one(), &y, &y, T::one());
    }
    SymMatrix::symmetrized(acc / T::of_usize(centered.len() * k))
}

fn spatial_from_factor<T: Scalar>(
    centered: &[DMatrix<T>],
    chol: &nalgebra::Cholesky<T, nalgebra::Dyn>,
) -> SymMatrix<T> {
    let (k, i) = centered[0].shape();
    let mut acc = DMatrix::zeros(k, k);
    for x in centered {
        let y = chol
            .l()
            .solve_lower_triangular(&x.transpose())
            .expect("factor is nonsingular");
        acc.gemm_tr(T::one(), &y, &y, T::one());
    }
    SymMatrix::symmetrized(acc / T::of_usize(centered.len() * i))
}

/// `(N K)^{-1} sum_n X_n^T U^{-1} X_n` for centered replicates.
pub fn update_temporal<T: Scalar>(centered: &[DMatrix<T>], u: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let chol = u
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("spatial factor U"))?;
    Ok(temporal_from_factor(centered, &chol))
}

/// `(N I)^{-1} sum_n X_n V^{-1} X_n^T` for centered replicates (before trace normalization).
pub fn update_spatial<T: Scalar>(centered: &[DMatrix<T>], v: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let chol = v
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("temporal factor V"))?;
    Ok(spatial_from_factor(centered, &chol))
}

fn normalize_trace<T: Scalar>(u: SymMatrix<T>, k: usize) -> SymMatrix<T> {
    let t = u.trace();
    u.scale(T::of_usize(k) / t)
}

pub fn flip_flop<T: Scalar>(
    sample: &ReplicatedMatrixSample<T>,
    cfg: &FlipFlopConfig,
) -> Result<SeparableCovEstimate<T>> {
    let (n, k, i) = (sample.n(), sample.k(), sample.i());
    if cfg.max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    if n * i <= k || n * k <= i {
        return Err(Error::Precondition(format!(
            "flip-flop needs N*I > K and N*K > I (N={n}, K={k}, I={i})"
        )));
    }
    let centered = sample.centered();
    let mut trace = Vec::new();

    let mut u = SymMatrix::identity(k);
    let mut v = temporal_from_factor(
        &centered,
        &checked_cholesky(&u, "spatial factor U", 0, cfg.max_condition)?,
    );
    if cfg.record_loglik {
        trace.push(loglik_centered(&centered, &u, &v)?.as_f64());
    }

    let mut change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let v_chol = checked_cholesky(&v, "temporal factor V", iterations, cfg.max_condition)?;
        let u_new = normalize_trace(spatial_from_factor(&centered, &v_chol), k);
        let u_chol = checked_cholesky(&u_new, "spatial factor U", iterations, cfg.max_condition)?;
        let v_new = temporal_from_factor(&centered, &u_chol);

        change = rel_change(u_new.as_matrix(), u.as_matrix())
            .as_f64()
            .max(rel_change(v_new.as_matrix(), v.as_matrix()).as_f64());
        u = u_new;
        v = v_new;
        if cfg.record_loglik {
            trace.push(loglik_centered(&centered, &u, &v)?.as_f64());
        }
        if change < cfg.tol {
            converged = true;
            break;
        }
    }

    Ok(SeparableCovEstimate {
        u_hat: u,
        v_hat: v,
        iterations,
        converged,
        final_rel_change: change,
        loglik_trace: trace,
    })
}

fn loglik_centered<T: Scalar>(centered: &[DMatrix<T>], u: &SymMatrix<T>, v: &SymMatrix<T>) -> Result<T> {
    let (k, i) = centered[0].shape();
    let n = centered.len();
    let lu = u
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("U in log-likelihood"))?;
    let lv = v
        .as_matrix()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("V in log-likelihood"))?;
    let two = T::of(2.0);
    let logdet = |c: &nalgebra::Cholesky<T, nalgebra::Dyn>| {
        c.l().diagonal().iter().map(|d| d.ln()).fold(T::zero(), |a, b| a + b) * two
    };
    // tr(V^{-1} X^T U^{-1} X) = |L_U^{-1} X L_V^{-T}|_F^2
    let mut quad = T::zero();
    for x in centered {
        let y = lu.l().solve_lower_triangular(x).expect("nonsingular");
        let z = lv
            .l()
            .solve_lower_triangular(&y.transpose())
            .expect("nonsingular");
        quad += z.norm_squared();
    }
    let nf = T::of_usize(n);
    let log2pi = T::of((2.0 * std::f64::consts::PI).ln());
    Ok(-(nf / two)
        * (T::of_usize(k * i) * log2pi + T::of_usize(i) * logdet(&lu) + T::of_usize(k) * logdet(&lv))
        - quad / two)
}

/// Matrix-normal log-likelihood at `(M_hat, U, V)`.
pub fn gaussian_loglik<T: Scalar>(
    sample: &ReplicatedMatrixSample<T>,
    u: &SymMatrix<T>,
    v: &SymMatrix<T>,
) -> Result<T> {
    if u.dim() != sample.k() || v.dim() != sample.i() {
        return Err(Error::Dimension(format!(
            "U is {0}x{0} and V is {1}x{1} for {2}x{3} replicates",
            u.dim(),
            v.dim(),
            sample.k(),
            sample.i()
        )));
    }
    loglik_centered(&sample.centered(), u, v)
}

/// Draws `n` matrices `M + U^{1/2} Z V^{1/2}` with `Z` standard normal, so that
/// `Cov(vec X) = V (x) U` when `u_root`, `v_root` are symmetric square roots
/// (any factors with `A A^T = U`, `B^T B = V` work).
pub fn sample_matrix_normal<T, R>(
    mean: &DMatrix<T>,
    u_root: &DMatrix<T>,
    v_root: &DMatrix<T>,
    n: usize,
    rng: &mut R,
) -> Vec<DMatrix<T>>
where
    T: Scalar,
    R: Rng + ?Sized,
    StandardNormal: Distribution<T>,
{
    let (k, i) = mean.shape();
    (0..n)
        .map(|_| {
            let z = DMatrix::from_fn(k, i, |_, _| StandardNormal.sample(rng));
            mean + u_root * z * v_root
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sqrt_psd;
    use crate::testutil::{random_matrix, random_spd, random_spd_trace_normalized};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn separable_sample(seed: u64, k: usize, i: usize, n: usize) -> ReplicatedMatrixSample<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_spd_trace_normalized(&mut rng, k);
        let v = random_spd(&mut rng, i);
        let m = random_matrix(&mut rng, k, i);
        let ur = sqrt_psd(&u, 1e-12).unwrap().into_inner();
        let vr = sqrt_psd(&v, 1e-12).unwrap().into_inner();
        ReplicatedMatrixSample::new(sample_matrix_normal(&m, &ur, &vr, n, &mut rng)).unwrap()
    }

    #[test]
    fn sample_validation() {
        assert!(ReplicatedMatrixSample::<f64>::new(vec![DMatrix::zeros(2, 2)]).is_err());
        assert!(ReplicatedMatrixSample::<f64>::new(vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 3)]).is_err());
        let bad = DMatrix::from_element(1, 1, f64::INFINITY);
        assert!(ReplicatedMatrixSample::new(vec![bad.clone(), bad]).is_err());
    }

    #[test]
    fn sigma_of_antithetic_pair() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let s = ReplicatedMatrixSample::new(vec![a.clone(), -a.clone()]).unwrap();
        let est = estimate_mean_and_sigma(&s);
        assert_eq!(est.m_hat.amax(), 0.0);
        let va = vectorize(&a);
        assert!((est.sigma_hat.as_matrix() - &va * va.transpose()).amax() < 1e-15);
    }

    #[test]
    fn sigma_of_constant_sample_is_zero() {
        let a = DMatrix::from_element(2, 3, 1.5);
        let s = ReplicatedMatrixSample::new(vec![a.clone(); 5]).unwrap();
        assert_eq!(estimate_mean_and_sigma(&s).sigma_hat.as_matrix().amax(), 0.0);
    }

    #[test]
    fn sigma_matches_double_loop() {
        let s = separable_sample(3, 2, 3, 40);
        let est = estimate_mean_and_sigma(&s);
        let n = s.n() as f64;
        let mut mean = [0.0; 6];
        for x in s.replicates() {
            for c in 0..3 {
                for r in 0..2 {
                    mean[r + 2 * c] += x[(r, c)] / n;
                }
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                let mut acc = 0.0;
                for x in s.replicates() {
                    acc += (x[(a % 2, a / 2)] - mean[a]) * (x[(b % 2, b / 2)] - mean[b]);
                }
                assert!((est.sigma_hat.as_matrix()[(a, b)] - acc / n).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_row_reduces_to_sample_covariance() {
        let s = separable_sample(4, 1, 3, 30);
        let fit = flip_flop(&s, &FlipFlopConfig::default()).unwrap();
        assert!((fit.u_hat.as_matrix()[(0, 0)] - 1.0).abs() < 1e-14);
        let full = estimate_mean_and_sigma(&s);
        assert!((fit.v_hat.as_matrix() - full.sigma_hat.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn first_temporal_update_closed_form() {
        let s = separable_sample(5, 3, 4, 25);
        let c = s.centered();
        let v0 = update_temporal(&c, &SymMatrix::identity(3)).unwrap();
        let mut acc = DMatrix::zeros(4, 4);
        for x in &c {
            acc += x.transpose() * x;
        }
        acc /= (25 * 3) as f64;
        assert!((v0.as_matrix() - acc).amax() < 1e-12);
    }

    #[test]
    fn trace_normalization_and_monotone_likelihood() {
        for seed in 0..50 {
            let s = separable_sample(100 + seed, 3, 4, 15);
            let cfg = FlipFlopConfig {
                record_loglik: true,
                ..Default::default()
            };
            let fit = flip_flop(&s, &cfg).unwrap();
            assert!((fit.u_hat.trace() - 3.0).abs() < 1e-12);
            for w in fit.loglik_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "seed {seed}: {w:?}");
            }
            assert!(fit.converged);
        }
    }

    #[test]
    fn trace_holds_at_every_iteration() {
        let s = separable_sample(8, 3, 2, 20);
        for max_iter in 1..6 {
            let cfg = FlipFlopConfig {
                max_iter,
                tol: 0.0,
                ..Default::default()
            };
            let fit = flip_flop(&s, &cfg).unwrap();
            assert_eq!(fit.iterations, max_iter);
            assert!(!fit.converged);
            assert!((fit.u_hat.trace() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loglik_scalar_case() {
        let xs: Vec<f64> = vec![0.3, -1.2, 0.7, 2.0, -0.4];
        let data = xs.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect();
        let s = ReplicatedMatrixSample::new(data).unwrap();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let s2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 5.0;
        let one = SymMatrix::identity(1);
        let ll = gaussian_loglik(&s, &one, &one).unwrap();
        assert_relative_eq!(ll, -2.5 * ((2.0 * std::f64::consts::PI).ln() + s2), max_relative = 1e-14);
    }

    #[test]
    fn loglik_scale_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = separable_sample(6, 2, 3, 12);
        let u = random_spd(&mut rng, 2);
        let v = random_spd(&mut rng, 3);
        let a = gaussian_loglik(&s, &u, &v).unwrap();
        let b = gaussian_loglik(&s, &u.scale(3.5), &v.scale(1.0 / 3.5)).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
        assert!(gaussian_loglik(&s, &SymMatrix::from_diagonal(&[1.0, -1.0]), &v).is_err());
    }

    #[test]
    fn precondition_and_singularity() {
        let s = separable_sample(9, 3, 4, 2);
        // N*I = 8 > 3 and N*K = 6 > 4, but a rank-deficient replicate set is singular
        let rank_one: Vec<_> = s.replicates().iter().map(|_| DMatrix::from_element(3, 4, 1.0)).collect();
        let mut data = rank_one;
        data[0][(0, 0)] = 2.0;
        let degenerate = ReplicatedMatrixSample::new(data).unwrap();
        assert!(matches!(
            flip_flop(&degenerate, &FlipFlopConfig::default()),
            Err(Error::Singular { .. })
        ));
        let tiny = separable_sample(10, 5, 1, 2);
        assert!(matches!(
            flip_flop(&tiny, &FlipFlopConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn equivariance_of_kronecker_fit() {
        let s = separable_sample(12, 3, 2, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = random_matrix(&mut rng, 3, 3) + DMatrix::identity(3, 3) * 2.0;
        let b = random_matrix(&mut rng, 2, 2) + DMatrix::identity(2, 2) * 2.0;
        let t = s.map(|x| &a * x * b.transpose()).unwrap();
        let cfg = FlipFlopConfig {
            tol: 1e-13,
            max_iter: 2000,
            ..Default::default()
        };
        let f0 = flip_flop(&s, &cfg).unwrap();
        let f1 = flip_flop(&t, &cfg).unwrap();
        let mapped = crate::linalg::kron(&b, &a) * f0.kron().as_matrix() * crate::linalg::kron(&b, &a).transpose();
        let got = f1.kron().into_inner();
        assert!((&mapped - &got).amax() < 1e-8 * got.amax());
    }

    #[test]
    fn invariant_to_replicate_order() {
        let s = separable_sample(14, 2, 3, 30);
        let mut rev = s.replicates().to_vec();
        rev.reverse();
        let r = ReplicatedMatrixSample::new(rev).unwrap();
        let cfg = FlipFlopConfig::default();
        let (a, b) = (flip_flop(&s, &cfg).unwrap(), flip_flop(&r, &cfg).unwrap());
        assert!((a.u_hat.as_matrix() - b.u_hat.as_matrix()).amax() < 1e-12);
        assert!((a.v_hat.as_matrix() - b.v_hat.as_matrix()).amax() < 1e-12);
        let (sa, sb) = (estimate_mean_and_sigma(&s), estimate_mean_and_sigma(&r));
        assert!((sa.sigma_hat.as_matrix() - sb.sigma_hat.as_matrix()).amax() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let s = separable_sample(15, 2, 3, 50);
        let s32 = ReplicatedMatrixSample::new(s.replicates().iter().map(|x| x.map(|v| v as f32)).collect()).unwrap();
        let fit = flip_flop(&s32, &FlipFlopConfig::for_scalar::<f32>()).unwrap();
        let fit64 = flip_flop(&s, &FlipFlopConfig::default()).unwrap();
        assert!((fit.u_hat.trace() - 2.0).abs() < 1e-5);
        let diff = fit.v_hat.as_matrix().map(|v| v as f64) - fit64.v_hat.as_matrix();
        assert!(diff.amax() < 1e-3);
    }
}
