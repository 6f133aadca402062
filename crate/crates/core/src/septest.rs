//! Separability statistics `T_L`, `T_F`, `T_W`, their p-values and the
//! Monte Carlo calibration of the likelihood ratio statistic.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use nalgebra_lapack::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::asymptotics::{
    degrees_of_freedom, identity_w_matrix, null_w_matrix_congruent, AsymptoticsConfig, WMatrix,
};
use crate::error::{Error, Result};
use crate::linalg::{inv_sqrt, kron_sym, vectorize, SymMatrix};
use crate::matnorm::{
    estimate_mean_and_sigma, flip_flop, FlipFlopConfig, FullCovEstimate, ReplicatedMatrixSample,
    SeparableCovEstimate,
};
use crate::scalar::Scalar;

/// Smallest number of Monte Carlo replicates accepted for the LRT reference distribution.
pub const MIN_MC_REPS: usize = 500;
pub const DEFAULT_MC_REPS: usize = 1000;
pub const DEFAULT_TAIL_DRAWS: usize = 200_000;
/// Weight spread beyond which the Imhof integral is replaced by simulation.
pub const IMHOF_MAX_DYNAMIC_RANGE: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestKind {
    #[serde(rename = "LRT_asymptotic", alias = "lrt")]
    LrtAsymptotic,
    #[serde(rename = "LRT_monte_carlo", alias = "lrt-mc")]
    LrtMonteCarlo,
    #[serde(alias = "frob")]
    Frobenius,
    #[serde(alias = "wald")]
    Wald,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [
        TestKind::LrtMonteCarlo,
        TestKind::LrtAsymptotic,
        TestKind::Frobenius,
        TestKind::Wald,
    ];

    /// Short name used on the command line and in scenario tables.
    pub fn short_name(self) -> &'static str {
        match self {
            TestKind::LrtAsymptotic => "lrt",
            TestKind::LrtMonteCarlo => "lrt-mc",
            TestKind::Frobenius => "frob",
            TestKind::Wald => "wald",
        }
    }

    pub fn report_name(self) -> &'static str {
        match self {
            TestKind::LrtAsymptotic => "LRT_asymptotic",
            TestKind::LrtMonteCarlo => "LRT_monte_carlo",
            TestKind::Frobenius => "Frobenius",
            TestKind::Wald => "Wald",
        }
    }

    fn needs_w(self) -> bool {
        matches!(self, TestKind::Frobenius | TestKind::Wald)
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lrt" | "lrt_asymptotic" => Ok(TestKind::LrtAsymptotic),
            "lrt-mc" | "lrt_mc" | "lrt_monte_carlo" => Ok(TestKind::LrtMonteCarlo),
            "frob" | "frobenius" => Ok(TestKind::Frobenius),
            "wald" => Ok(TestKind::Wald),
            other => Err(Error::InvalidInput(format!(
                "unknown test '{other}' (expected lrt, lrt-mc, frob, wald)"
            ))),
        }
    }
}

/// Outcome of one separability test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: TestKind,
    pub statistic: f64,
    pub df: Option<usize>,
    pub weights: Option<Vec<f64>>,
    pub p_value: f64,
    #[serde(rename = "K_eff")]
    pub k_eff: usize,
    #[serde(rename = "I_eff")]
    pub i_eff: usize,
    pub mc_replicates: Option<usize>,
    pub converged: bool,
    pub iterations: usize,
}

fn check_estimates<T: Scalar>(sep: &SeparableCovEstimate<T>, full: &FullCovEstimate<T>) -> Result<()> {
    let r = sep.u_hat.dim() * sep.v_hat.dim();
    if full.sigma_hat.dim() != r {
        return Err(Error::Dimension(format!(
            "Sigma_hat is {0}x{0}, expected {1}x{1}",
            full.sigma_hat.dim(),
            r
        )));
    }
    Ok(())
}

fn kron_minus_sigma<T: Scalar>(sep: &SeparableCovEstimate<T>, full: &FullCovEstimate<T>) -> DMatrix<T> {
    sep.kron().as_matrix() - full.sigma_hat.as_matrix()
}

/// `N (I logdet U_hat + K logdet V_hat - logdet Sigma_hat)`.
pub fn stat_lrt<T: Scalar>(sep: &SeparableCovEstimate<T>, full: &FullCovEstimate<T>, n: usize) -> Result<T> {
    check_estimates(sep, full)?;
    let (k, i) = (sep.u_hat.dim(), sep.v_hat.dim());
    let ld_sigma = full.sigma_hat.logdet().map_err(|_| {
        Error::Precondition(format!(
            "Sigma_hat is singular; the likelihood ratio statistic needs N > K*I (N={n}, K*I={})",
            k * i
        ))
    })?;
    let value = T::of_usize(i) * sep.u_hat.logdet()? + T::of_usize(k) * sep.v_hat.logdet()? - ld_sigma;
    Ok(T::of_usize(n) * value)
}

/// `N |V_hat (x) U_hat - Sigma_hat|_F^2`.
pub fn stat_frobenius<T: Scalar>(sep: &SeparableCovEstimate<T>, full: &FullCovEstimate<T>, n: usize) -> Result<T> {
    check_estimates(sep, full)?;
    Ok(T::of_usize(n) * kron_minus_sigma(sep, full).norm_squared())
}

/// `N d^T W^+ d` with `d = vec(V_hat (x) U_hat - Sigma_hat)`.
pub fn stat_wald<T: Scalar>(
    sep: &SeparableCovEstimate<T>,
    full: &FullCovEstimate<T>,
    w: &WMatrix<T>,
    n: usize,
) -> Result<T> {
    check_estimates(sep, full)?;
    let d = vectorize(&kron_minus_sigma(sep, full));
    if w.w_pinv.dim() != d.len() {
        return Err(Error::Dimension(format!(
            "W is {0}x{0}, difference vector has length {1}",
            w.w_pinv.dim(),
            d.len()
        )));
    }
    Ok(T::of_usize(n) * (w.w_pinv.as_matrix() * &d).dot(&d))
}

/// Wald statistic in whitened coordinates, `N vec(D)' W(I, I)^+ vec(D)` with
/// `D = P^{-1} Sigma_hat P^{-1} - I` and `P = V_hat^{1/2} (x) U_hat^{1/2}`.
///
/// Equal to [`stat_wald`] with `W` at the null estimate, by equivariance of
/// the estimators under `X -> A X B'`.
pub fn stat_wald_whitened<T: Scalar>(
    sep: &SeparableCovEstimate<T>,
    full: &FullCovEstimate<T>,
    w_identity: &WMatrix<T>,
    n: usize,
    rtol: f64,
) -> Result<T> {
    check_estimates(sep, full)?;
    let r = full.sigma_hat.dim();
    if w_identity.w_pinv.dim() != r * r {
        return Err(Error::Dimension(format!(
            "identity W is {0}x{0}, expected {1}x{1}",
            w_identity.w_pinv.dim(),
            r * r
        )));
    }
    let p_inv = kron_sym(&inv_sqrt(&sep.v_hat, rtol)?, &inv_sqrt(&sep.u_hat, rtol)?);
    let p = p_inv.as_matrix();
    let white = p * full.sigma_hat.as_matrix() * p - DMatrix::identity(r, r);
    let d = vectorize(&white);
    Ok(T::of_usize(n) * (w_identity.w_pinv.as_matrix() * &d).dot(&d))
}

/// Upper tail of the chi-square law with `df` degrees of freedom.
pub fn pvalue_chisq(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return if stat <= 1e-8 { 1.0 } else { 0.0 };
    }
    if stat <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    dist.sf(stat).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailMethod {
    /// Imhof unless the weights span more than [`IMHOF_MAX_DYNAMIC_RANGE`].
    Auto,
    Imhof,
    MonteCarlo,
}

#[derive(Clone, Debug)]
pub struct TailConfig {
    pub method: TailMethod,
    pub mc_draws: usize,
    pub seed: u64,
    /// Weights below `rtol * max` in absolute value are treated as zero.
    pub rtol: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        TailConfig {
            method: TailMethod::Auto,
            mc_draws: DEFAULT_TAIL_DRAWS,
            seed: 0x5eed,
            rtol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedTail {
    pub p_value: f64,
    pub method: TailMethod,
    pub weights_used: usize,
    /// Weights below `-rtol * max` that were discarded.
    pub dropped_negative: usize,
}

/// `P(sum_r w_r Z_r^2 > stat)` for iid standard normal `Z_r`.
pub fn pvalue_weighted_chisq(stat: f64, weights: &[f64], cfg: &TailConfig) -> Result<f64> {
    weighted_chisq_tail(stat, weights, cfg).map(|t| t.p_value)
}

pub fn weighted_chisq_tail(stat: f64, weights: &[f64], cfg: &TailConfig) -> Result<WeightedTail> {
    if !stat.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("weighted chi-square arguments"));
    }
    let max = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let cutoff = max * cfg.rtol;
    let dropped_negative = weights.iter().filter(|&&w| w < -cutoff).count();
    let kept: Vec<f64> = weights.iter().copied().filter(|&w| w > cutoff).collect();
    let done = |p: f64, method| WeightedTail {
        p_value: p.clamp(0.0, 1.0),
        method,
        weights_used: kept.len(),
        dropped_negative,
    };
    if kept.is_empty() {
        return Ok(done(if stat <= 1e-8 { 1.0 } else { 0.0 }, cfg.method));
    }
    if stat <= 0.0 {
        return Ok(done(1.0, cfg.method));
    }
    let wmax = kept.iter().cloned().fold(f64::MIN, f64::max);
    let wmin = kept.iter().cloned().fold(f64::MAX, f64::min);
    let method = match cfg.method {
        TailMethod::Auto if wmax / wmin > IMHOF_MAX_DYNAMIC_RANGE => TailMethod::MonteCarlo,
        TailMethod::Auto => TailMethod::Imhof,
        m => m,
    };
    let p = match method {
        TailMethod::MonteCarlo => weighted_chisq_mc(stat, &kept, cfg.mc_draws, cfg.seed)?,
        _ => {
            if cfg.method == TailMethod::Auto && wmax - wmin <= 1e-12 * wmax {
                pvalue_chisq(stat / wmax, kept.len())
            } else {
                imhof(stat, &kept)?
            }
        }
    };
    Ok(done(p, method))
}

fn weighted_chisq_mc(stat: f64, weights: &[f64], draws: usize, seed: u64) -> Result<f64> {
    if draws == 0 {
        return Err(Error::InvalidInput("mc_draws must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count = 0usize;
    for _ in 0..draws {
        let q: f64 = weights
            .iter()
            .map(|w| {
                let z: f64 = rng.sample(StandardNormal);
                w * z * z
            })
            .sum();
        if q > stat {
            count += 1;
        }
    }
    Ok(count as f64 / draws as f64)
}

const GL_ORDER: usize = 32;

fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        // Golub-Welsch: eigenpairs of the Jacobi matrix of the Legendre recurrence.
        let n = GL_ORDER;
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
            jac[(k - 1, k)] = b;
            jac[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|j| (eig.eigenvalues[j], 2.0 * eig.eigenvectors[(0, j)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().unzip()
    })
}

fn gl_integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (x, w) = gauss_legendre();
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    x.iter().zip(w).map(|(xi, wi)| wi * f(mid + half * xi)).sum::<f64>() * half
}

/// Integrates over `[a, b]` split into pieces no wider than `width`.
fn panels(f: &impl Fn(f64) -> f64, a: f64, b: f64, width: f64) -> f64 {
    let pieces = ((b - a) / width).ceil().clamp(1.0, 1e6) as usize;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|j| gl_integrate(f, a + j as f64 * h, a + (j + 1) as f64 * h))
        .sum()
}

/// Wynn epsilon extrapolation of a sequence of partial sums.
fn wynn_epsilon(s: &[f64]) -> f64 {
    let n = s.len();
    if n < 3 {
        return *s.last().unwrap_or(&0.0);
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur: Vec<f64> = s.to_vec();
    let mut best = s[n - 1];
    let mut column = 0;
    while cur.len() > 1 {
        let mut next = Vec::with_capacity(cur.len() - 1);
        for j in 0..cur.len() - 1 {
            let diff = cur[j + 1] - cur[j];
            if diff == 0.0 {
                return if column % 2 == 0 { cur[j + 1] } else { best };
            }
            next.push(prev[j + 1] + 1.0 / diff);
        }
        column += 1;
        prev = cur;
        cur = next;
        if column % 2 == 0 {
            best = *cur.last().expect("nonempty");
        }
    }
    best
}

/// Imhof's inversion of the characteristic function of `sum_r w_r Z_r^2`.
fn imhof(stat: f64, weights: &[f64]) -> Result<f64> {
    let wmax = weights.iter().cloned().fold(f64::MIN, f64::max);
    let lam: Vec<f64> = weights.iter().map(|w| w / wmax).collect();
    let x = stat / wmax;
    let sum_l: f64 = lam.iter().sum();

    let theta = |u: f64| 0.5 * lam.iter().map(|l| (l * u).atan()).sum::<f64>() - 0.5 * x * u;
    let dtheta = |u: f64| 0.5 * lam.iter().map(|l| l / (1.0 + l * l * u * u)).sum::<f64>() - 0.5 * x;
    let log_rho = |u: f64| 0.25 * lam.iter().map(|l| (l * l * u * u).ln_1p()).sum::<f64>();
    let integrand = |u: f64| {
        if u < 1e-300 {
            0.5 * (sum_l - x)
        } else {
            theta(u).sin() / (u * log_rho(u).exp())
        }
    };
    let envelope = |u: f64| (-log_rho(u)).exp() / u;

    let omega = 0.5 * sum_l.max(x);
    let width = std::f64::consts::PI / omega;

    // Beyond u_star theta is strictly decreasing: zeros of sin(theta) bracket half cycles.
    let mut hi = 1.0;
    while dtheta(hi) >= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoConvergence("Imhof integral (monotone region)"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if dtheta(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let u_star = hi;

    let mut total = if u_star > 0.0 { panels(&integrand, 0.0, u_star, width) } else { 0.0 };
    let mut a = u_star;
    let mut target = (theta(a) / std::f64::consts::PI).floor() * std::f64::consts::PI;
    if (theta(a) - target).abs() < 1e-14 {
        target -= std::f64::consts::PI;
    }
    let mut sums = Vec::new();
    let mut last_estimate = f64::NAN;
    let mut stable = 0;
    for _ in 0..5000 {
        // Next u with theta(u) = target, found by safeguarded Newton.
        let mut lo = a;
        let mut hi = a + width;
        while theta(hi) > target {
            lo = hi;
            hi += 2.0 * (hi - a);
        }
        let mut b = 0.5 * (lo + hi);
        for _ in 0..100 {
            let g = theta(b) - target;
            if g > 0.0 {
                lo = b;
            } else {
                hi = b;
            }
            let step = g / dtheta(b);
            let cand = b - step;
            b = if cand > lo && cand < hi { cand } else { 0.5 * (lo + hi) };
            if (hi - lo) < 1e-15 * hi || step.abs() < 1e-15 * b {
                break;
            }
        }
        total += panels(&integrand, a, b, width);
        sums.push(total);
        a = b;
        target -= std::f64::consts::PI;

        if envelope(a) < 1e-17 {
            last_estimate = total;
            break;
        }
        if sums.len() >= 4 {
            let start = sums.len().saturating_sub(24);
            let est = wynn_epsilon(&sums[start..]);
            if (est - last_estimate).abs() < 1e-13 {
                stable += 1;
                if stable >= 3 {
                    last_estimate = est;
                    break;
                }
            } else {
                stable = 0;
            }
            last_estimate = est;
        }
    }
    if !last_estimate.is_finite() {
        return Err(Error::NoConvergence("Imhof integral"));
    }
    Ok((0.5 + last_estimate / std::f64::consts::PI).clamp(0.0, 1.0))
}

/// Settings for [`run_separability_test`].
#[derive(Clone, Debug)]
pub struct SepTestConfig {
    pub flip_flop: FlipFlopConfig,
    pub asymptotics: AsymptoticsConfig,
    pub tail: TailConfig,
    pub mc_reps: usize,
    pub seed: u64,
}

impl SepTestConfig {
    pub fn for_scalar<T: Scalar>() -> Self {
        SepTestConfig {
            flip_flop: FlipFlopConfig::for_scalar::<T>(),
            asymptotics: AsymptoticsConfig::for_scalar::<T>(),
            tail: TailConfig {
                rtol: T::DEFAULT_RTOL,
                ..TailConfig::default()
            },
            mc_reps: DEFAULT_MC_REPS,
            seed: 0,
        }
    }
}

impl Default for SepTestConfig {
    fn default() -> Self {
        Self::for_scalar::<f64>()
    }
}

/// Estimates shared by all statistics.
#[derive(Clone, Debug)]
pub struct SeparabilityFit<T: Scalar> {
    pub n: usize,
    pub sep: SeparableCovEstimate<T>,
    pub full: FullCovEstimate<T>,
    /// `W` at `(U_hat, V_hat, V_hat (x) U_hat)`, present when requested.
    pub w: Option<WMatrix<T>>,
    /// `W` at the identity point, used by the whitened Wald statistic.
    pub w_identity: Option<WMatrix<T>>,
    rtol: f64,
}

impl<T: Scalar> SeparabilityFit<T> {
    pub fn new(sample: &ReplicatedMatrixSample<T>, with_w: bool, cfg: &SepTestConfig) -> Result<Self> {
        let sep = flip_flop(sample, &cfg.flip_flop)?;
        let full = estimate_mean_and_sigma(sample);
        let (w, w_identity) = if with_w {
            let w0 = identity_w_matrix(sep.u_hat.dim(), sep.v_hat.dim(), &cfg.asymptotics)?;
            let w = null_w_matrix_congruent(&sep.u_hat, &sep.v_hat, &w0, cfg.asymptotics.rtol)?;
            (Some(w), Some(w0))
        } else {
            (None, None)
        };
        Ok(SeparabilityFit {
            n: sample.n(),
            sep,
            full,
            w,
            w_identity,
            rtol: cfg.asymptotics.rtol,
        })
    }

    pub fn k(&self) -> usize {
        self.sep.u_hat.dim()
    }

    pub fn i(&self) -> usize {
        self.sep.v_hat.dim()
    }

    fn base(&self, kind: TestKind, statistic: f64, p_value: f64) -> TestReport {
        TestReport {
            kind,
            statistic,
            df: None,
            weights: None,
            p_value,
            k_eff: self.k(),
            i_eff: self.i(),
            mc_replicates: None,
            converged: self.sep.converged,
            iterations: self.sep.iterations,
        }
    }

    fn w(&self) -> Result<&WMatrix<T>> {
        self.w
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("W matrix was not computed for this fit".into()))
    }

    pub fn lrt(&self) -> Result<T> {
        stat_lrt(&self.sep, &self.full, self.n)
    }

    pub fn lrt_report(&self) -> Result<TestReport> {
        let s = self.lrt()?.as_f64();
        let df = degrees_of_freedom(self.k(), self.i());
        Ok(TestReport {
            df: Some(df),
            ..self.base(TestKind::LrtAsymptotic, s, pvalue_chisq(s, df))
        })
    }

    /// Monte Carlo LRT against a precomputed reference sample of null statistics.
    pub fn lrt_mc_report(&self, null_stats: &[f64]) -> Result<TestReport> {
        let s = self.lrt()?.as_f64();
        Ok(TestReport {
            mc_replicates: Some(null_stats.len()),
            ..self.base(TestKind::LrtMonteCarlo, s, mc_pvalue(s, null_stats))
        })
    }

    pub fn frobenius_report(&self, tail: &TailConfig) -> Result<TestReport> {
        let w = self.w()?;
        let s = stat_frobenius(&self.sep, &self.full, self.n)?.as_f64();
        let weights: Vec<f64> = w.eigenvalues[..w.rank].iter().map(|l| l.as_f64()).collect();
        let p = pvalue_weighted_chisq(s, &weights, tail)?;
        Ok(TestReport {
            weights: Some(weights),
            ..self.base(TestKind::Frobenius, s, p)
        })
    }

    pub fn wald_report(&self) -> Result<TestReport> {
        let w0 = self
            .w_identity
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("W matrix was not computed for this fit".into()))?;
        let s = stat_wald_whitened(&self.sep, &self.full, w0, self.n, self.rtol)?.as_f64();
        let df = degrees_of_freedom(self.k(), self.i());
        Ok(TestReport {
            df: Some(df),
            ..self.base(TestKind::Wald, s, pvalue_chisq(s, df))
        })
    }
}

/// `(1 + #{T* >= T}) / (reps + 1)`.
pub fn mc_pvalue(observed: f64, null_stats: &[f64]) -> f64 {
    let count = null_stats.iter().filter(|&&t| t >= observed).count();
    (1 + count) as f64 / (null_stats.len() + 1) as f64
}

fn lrt_precondition(n: usize, k: usize, i: usize) -> Result<()> {
    if n <= k * i {
        return Err(Error::Precondition(format!(
            "the likelihood ratio test needs N > K*I (N={n}, K*I={}); reduce the dimensions",
            k * i
        )));
    }
    Ok(())
}

/// RNG for replicate `rep` of a run seeded with `seed`.
pub fn replicate_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// LRT statistics of `reps` samples of `n` standard normal `k x i` matrices.
pub fn null_lrt_distribution<T>(
    n: usize,
    k: usize,
    i: usize,
    reps: usize,
    seed: u64,
    cfg: &FlipFlopConfig,
) -> Result<Vec<f64>>
where
    T: Scalar,
    StandardNormal: Distribution<T>,
{
    lrt_precondition(n, k, i)?;
    if reps < MIN_MC_REPS {
        return Err(Error::InvalidInput(format!(
            "Monte Carlo LRT needs at least {MIN_MC_REPS} replicates, got {reps}"
        )));
    }
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = replicate_rng(seed, rep);
            let data = (0..n)
                .map(|_| DMatrix::<T>::from_fn(k, i, |_, _| StandardNormal.sample(&mut rng)))
                .collect();
            let sample = ReplicatedMatrixSample::new(data)?;
            let sep = flip_flop(&sample, cfg)?;
            let full = estimate_mean_and_sigma(&sample);
            Ok(stat_lrt(&sep, &full, n)?.as_f64())
        })
        .collect()
}

/// Monte Carlo calibrated likelihood ratio test.
pub fn monte_carlo_lrt<T>(sample: &ReplicatedMatrixSample<T>, reps: usize, seed: u64, cfg: &FlipFlopConfig) -> Result<TestReport>
where
    T: Scalar,
    StandardNormal: Distribution<T>,
{
    lrt_precondition(sample.n(), sample.k(), sample.i())?;
    let null = null_lrt_distribution::<T>(sample.n(), sample.k(), sample.i(), reps, seed, cfg)?;
    let test_cfg = SepTestConfig {
        flip_flop: cfg.clone(),
        ..SepTestConfig::for_scalar::<T>()
    };
    SeparabilityFit::new(sample, false, &test_cfg)?.lrt_mc_report(&null)
}

/// Runs the requested tests on one sample, one report per kind in the order given.
pub fn run_separability_test<T>(
    sample: &ReplicatedMatrixSample<T>,
    kinds: &[TestKind],
    cfg: &SepTestConfig,
) -> Result<Vec<TestReport>>
where
    T: Scalar,
    StandardNormal: Distribution<T>,
{
    if kinds.is_empty() {
        return Err(Error::InvalidInput("no tests requested".into()));
    }
    let (n, k, i) = (sample.n(), sample.k(), sample.i());
    if kinds
        .iter()
        .any(|t| matches!(t, TestKind::LrtAsymptotic | TestKind::LrtMonteCarlo))
    {
        lrt_precondition(n, k, i)?;
    }
    let fit = SeparabilityFit::new(sample, kinds.iter().any(|t| t.needs_w()), cfg)?;
    let null = if kinds.contains(&TestKind::LrtMonteCarlo) {
        Some(null_lrt_distribution::<T>(n, k, i, cfg.mc_reps, cfg.seed, &cfg.flip_flop)?)
    } else {
        None
    };
    kinds
        .iter()
        .map(|kind| match kind {
            TestKind::LrtAsymptotic => fit.lrt_report(),
            TestKind::LrtMonteCarlo => fit.lrt_mc_report(null.as_deref().expect("computed above")),
            TestKind::Frobenius => fit.frobenius_report(&cfg.tail),
            TestKind::Wald => fit.wald_report(),
        })
        .collect()
}

/// Replaces `Sigma_hat` by the fitted Kronecker product, for which every statistic vanishes.
pub fn kronecker_substituted<T: Scalar>(fit: &SeparabilityFit<T>) -> SeparabilityFit<T> {
    let mut out = fit.clone();
    out.full.sigma_hat = SymMatrix::symmetrized(fit.sep.kron().into_inner());
    out
}
