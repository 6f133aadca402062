//! Gaussian space-time fields with Gneiting covariance and the rejection-rate
//! study built on them.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::{reduce_space_time, CurvePanel, Selection};
use crate::linalg::SymMatrix;
use crate::septest::{null_lrt_distribution, replicate_rng, SepTestConfig, SeparabilityFit, TestKind};

/// Largest `K * I` accepted by [`build_cov_matrix`].
pub const MAX_FIELD_DIM: usize = 4000;
pub const DEFAULT_LEVEL: f64 = 0.05;
pub const DEFAULT_TIME_POINTS: usize = 100;

/// Parameters of `s2 / (a|dt|^{2 alpha} + 1)^tau * exp(-c |ds|^{2 gamma} / (a|dt|^{2 alpha} + 1)^{beta gamma})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GneitingParams {
    pub a: f64,
    pub c: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub sigma2: f64,
    pub tau: f64,
}

impl GneitingParams {
    /// Spatial dimension of the coordinates.
    pub const SPACE_DIM: f64 = 2.0;

    pub fn new(a: f64, c: f64, alpha: f64, gamma: f64, beta: f64, sigma2: f64, tau: f64) -> Result<Self> {
        let p = GneitingParams {
            a,
            c,
            alpha,
            gamma,
            beta,
            sigma2,
            tau,
        };
        p.validate()?;
        Ok(p)
    }

    /// `a = c = 1`, `alpha = 1/2`, `gamma = 1`, `sigma2 = 1`, `tau = 1`.
    pub fn simulation_defaults(beta: f64) -> Result<Self> {
        Self::new(1.0, 1.0, 0.5, 1.0, beta, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("Gneiting parameters: {m}")));
        let all = [self.a, self.c, self.alpha, self.gamma, self.beta, self.sigma2, self.tau];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all values must be finite");
        }
        if self.a < 0.0 || self.c < 0.0 {
            return bad("a and c must be nonnegative");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("alpha and gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1]");
        }
        if self.sigma2 <= 0.0 {
            return bad("sigma2 must be positive");
        }
        if self.tau < self.beta * Self::SPACE_DIM / 2.0 {
            return bad("tau must be at least beta * d / 2");
        }
        Ok(())
    }
}

pub fn gneiting_cov(p: &GneitingParams, s: [f64; 2], s2: [f64; 2], t: f64, t2: f64) -> f64 {
    let psi = p.a * (t - t2).abs().powf(2.0 * p.alpha) + 1.0;
    let d2 = (s[0] - s2[0]).powi(2) + (s[1] - s2[1]).powi(2);
    let ds = d2.powf(p.gamma);
    p.sigma2 / psi.powf(p.tau) * (-p.c * ds / psi.powf(p.beta * p.gamma)).exp()
}

/// Covariance of `vec X` for `X` the `K x I` field, space index fastest.
pub fn build_cov_matrix(p: &GneitingParams, coords: &[[f64; 2]], times: &[f64]) -> Result<SymMatrix<f64>> {
    p.validate()?;
    let (k, i) = (coords.len(), times.len());
    if k == 0 || i == 0 {
        return Err(Error::InvalidInput("need at least one location and one time point".into()));
    }
    if k * i > MAX_FIELD_DIM {
        return Err(Error::TooLarge {
            what: "K*I for the space-time covariance matrix",
            value: k * i,
            limit: MAX_FIELD_DIM,
        });
    }
    let r = k * i;
    let m = DMatrix::from_fn(r, r, |a, b| {
        gneiting_cov(p, coords[a % k], coords[b % k], times[a / k], times[b / k])
    });
    Ok(SymMatrix::symmetrized(m))
}

/// 3x3 regular grid on the unit square plus `(0.25, 0.5)` and `(0.75, 0.5)`.
pub fn default_layout() -> Vec<[f64; 2]> {
    let mut c = Vec::with_capacity(11);
    for y in [0.0, 0.5, 1.0] {
        for x in [0.0, 0.5, 1.0] {
            c.push([x, y]);
        }
    }
    c.push([0.25, 0.5]);
    c.push([0.75, 0.5]);
    c
}

/// `I` equally spaced points on `[0, 1]`.
pub fn unit_grid(i: usize) -> Vec<f64> {
    if i == 1 {
        return vec![0.0];
    }
    (0..i).map(|j| j as f64 / (i - 1) as f64).collect()
}

/// Draws zero-mean fields from a fixed covariance through its Cholesky factor.
#[derive(Clone, Debug)]
pub struct FieldSampler {
    factor: DMatrix<f64>,
    k: usize,
    grid: Vec<f64>,
    coords: Option<Vec<[f64; 2]>>,
    /// Diagonal inflation that made the factorization succeed.
    pub jitter: f64,
}

impl FieldSampler {
    pub fn new(cov: &SymMatrix<f64>, k: usize, grid: Vec<f64>) -> Result<Self> {
        let dim = cov.dim();
        if k == 0 || dim != k * grid.len() {
            return Err(Error::Dimension(format!(
                "covariance is {dim}x{dim}, expected K*I = {}*{}",
                k,
                grid.len()
            )));
        }
        let scale = cov.trace() / dim as f64;
        for rel in [0.0, 1e-14, 1e-12, 1e-10] {
            let mut m = cov.as_matrix().clone();
            for d in 0..dim {
                m[(d, d)] += rel * scale;
            }
            if let Some(ch) = m.cholesky() {
                return Ok(FieldSampler {
                    factor: ch.l(),
                    k,
                    grid,
                    coords: None,
                    jitter: rel * scale,
                });
            }
        }
        Err(Error::NotPositiveDefinite("space-time covariance after jitter"))
    }

    pub fn with_coords(mut self, coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.len() != self.k {
            return Err(Error::Dimension(format!("{} coordinates for K = {}", coords.len(), self.k)));
        }
        self.coords = Some(coords);
        Ok(self)
    }

    /// `n` independent replicates as a curve panel.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<CurvePanel> {
        let dim = self.factor.nrows();
        let z = DMatrix::<f64>::from_fn(dim, n, |_, _| rng.sample(StandardNormal));
        let x = &self.factor * z;
        let i = self.grid.len();
        let values = (0..n)
            .map(|c| DMatrix::from_column_slice(self.k, i, x.column(c).as_slice()))
            .collect();
        let ids = (1..=self.k).map(|j| format!("s{j}")).collect();
        CurvePanel::with_locations(self.grid.clone(), values, ids, self.coords.clone())
    }
}

/// `n` replicates of the `K x I` field with covariance `cov`, times on `[0, 1]`.
pub fn sample_panel(cov: &SymMatrix<f64>, k: usize, i: usize, n: usize, seed: u64) -> Result<CurvePanel> {
    let sampler = FieldSampler::new(cov, k, unit_grid(i))?;
    sampler.sample(n, &mut replicate_rng(seed, 0))
}

fn default_tests() -> Vec<TestKind> {
    TestKind::ALL.to_vec()
}

fn default_level() -> f64 {
    DEFAULT_LEVEL
}

fn default_time_points() -> usize {
    DEFAULT_TIME_POINTS
}

fn default_mc_reps() -> usize {
    crate::septest::DEFAULT_MC_REPS
}

/// Input of [`run_scenario`], also the JSON layout of scenario spec files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: String,
    pub beta: Vec<f64>,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    /// `(L, J)` pairs.
    #[serde(rename = "LJ")]
    pub lj: Vec<(usize, usize)>,
    pub reps: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_tests")]
    pub tests: Vec<TestKind>,
    #[serde(default = "default_mc_reps")]
    pub mc_reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_time_points")]
    pub time_points: usize,
    /// Spatial coordinates; the default layout when absent.
    #[serde(default)]
    pub locations: Option<Vec<[f64; 2]>>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.reps < 100 {
            return bad(format!("scenario needs at least 100 replications, got {}", self.reps));
        }
        if self.beta.is_empty() || self.n.is_empty() || self.lj.is_empty() || self.tests.is_empty() {
            return bad("beta, N, LJ and tests must be nonempty".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.lj.iter().any(|&(l, j)| l == 0 || j == 0) {
            return bad("L and J must be positive".into());
        }
        if self.time_points < 4 {
            return bad("at least 4 time points are required".into());
        }
        for &b in &self.beta {
            GneitingParams::simulation_defaults(b)?;
        }
        if self.tests.contains(&TestKind::LrtMonteCarlo) {
            for &n in &self.n {
                for &(l, j) in &self.lj {
                    if n <= l * j {
                        return bad(format!("Monte Carlo LRT requires N > LJ (N = {n}, L = {l}, J = {j})"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// One line of the rejection-rate table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub scenario: String,
    pub beta: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub test: String,
    pub rejections: usize,
    /// Replicates evaluated successfully; failures are excluded.
    pub reps: usize,
    pub rate_pct: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: String,
    pub rows: Vec<ScenarioRow>,
    /// Replicates whose pipeline failed, keyed like the rows (`beta, N, L, J`).
    pub failures: Vec<(f64, usize, usize, usize, usize)>,
    pub seed: u64,
    pub runtime_secs: f64,
}

impl ScenarioResult {
    pub fn rate(&self, beta: f64, n: usize, l: usize, j: usize, test: TestKind) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.beta == beta && r.n == n && r.l == l && r.j == j && r.test == test.short_name())
            .map(|r| r.rate_pct)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn combo_seed(seed: u64, n: usize, l: usize, j: usize) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [n as u64, l as u64, j as u64] {
        h = (h ^ v).wrapping_mul(0x100_0000_01b3).rotate_left(17);
    }
    h
}

/// Full pipeline for every `(beta, N, L, J)` cell: simulate, reduce with pinned
/// `L` and `J`, test, and count rejections at `spec.level`.
///
/// Replicate `r` of a cell draws from the stream `(seed(N, L, J), r)`, so all
/// `beta` values share their standard normal draws.
pub fn run_scenario(spec: &ScenarioSpec, cfg: &SepTestConfig) -> Result<ScenarioResult> {
    spec.validate()?;
    let start = Instant::now();
    let coords = spec.locations.clone().unwrap_or_else(default_layout);
    let times = unit_grid(spec.time_points);
    let k = coords.len();
    let needs_w = spec.tests.iter().any(|t| matches!(t, TestKind::Frobenius | TestKind::Wald));

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &beta in &spec.beta {
        let params = GneitingParams::simulation_defaults(beta)?;
        let cov = build_cov_matrix(&params, &coords, &times)?;
        let sampler = FieldSampler::new(&cov, k, times.clone())?.with_coords(coords.clone())?;
        for &n in &spec.n {
            for &(l, j) in &spec.lj {
                let seed = combo_seed(spec.seed, n, l, j);
                let null = if spec.tests.contains(&TestKind::LrtMonteCarlo) {
                    Some(null_lrt_distribution::<f64>(n, l, j, spec.mc_reps, seed ^ 0x4e55_4c4c, &cfg.flip_flop)?)
                } else {
                    None
                };
                let outcomes: Vec<Option<Vec<bool>>> = (0..spec.reps)
                    .into_par_iter()
                    .map(|rep| {
                        let run = || -> Result<Vec<bool>> {
                            let panel = sampler.sample(n, &mut replicate_rng(seed, rep))?;
                            let red = reduce_space_time(&panel, Selection::Fixed(j), Selection::Fixed(l))?;
                            let fit = SeparabilityFit::new(&red.scores, needs_w, cfg)?;
                            spec.tests
                                .iter()
                                .map(|kind| {
                                    let report = match kind {
                                        TestKind::LrtAsymptotic => fit.lrt_report(),
                                        TestKind::LrtMonteCarlo => fit.lrt_mc_report(null.as_deref().expect("computed")),
                                        TestKind::Frobenius => fit.frobenius_report(&cfg.tail),
                                        TestKind::Wald => fit.wald_report(),
                                    }?;
                                    Ok(report.p_value < spec.level)
                                })
                                .collect()
                        };
                        run().ok()
                    })
                    .collect();
                let ok: Vec<&Vec<bool>> = outcomes.iter().flatten().collect();
                let failed = spec.reps - ok.len();
                if failed > 0 {
                    failures.push((beta, n, l, j, failed));
                }
                for (t, kind) in spec.tests.iter().enumerate() {
                    let rejections = ok.iter().filter(|o| o[t]).count();
                    let evaluated = ok.len();
                    rows.push(ScenarioRow {
                        scenario: spec.scenario.clone(),
                        beta,
                        n,
                        l,
                        j,
                        test: kind.short_name().to_string(),
                        rejections,
                        reps: evaluated,
                        rate_pct: if evaluated > 0 {
                            100.0 * rejections as f64 / evaluated as f64
                        } else {
                            f64::NAN
                        },
                    });
                }
            }
        }
    }
    Ok(ScenarioResult {
        scenario: spec.scenario.clone(),
        rows,
        failures,
        seed: spec.seed,
        runtime_secs: start.elapsed().as_secs_f64(),
    })
}
