//! Reduction of curves observed at fixed locations to score matrices.
//!
//! Curves are stored per replicate as `K x T` matrices on a common grid.
//! Inner products use trapezoidal weights on the grid rescaled to `[0, 1]`,
//! and every basis is orthonormal with respect to that rule.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{rel_change, sym_eigen, SymMatrix};
use crate::matnorm::ReplicatedMatrixSample;

pub const DEFAULT_TAU: f64 = 0.80;
pub const DEFAULT_TAU_DATA_DRIVEN: f64 = 0.85;
pub const DATA_DRIVEN_TOL: f64 = 1e-6;
pub const DATA_DRIVEN_MAX_ITER: usize = 50;
/// Relative gap below which neighbouring eigenvalues are reported as tied.
const TIE_RTOL: f64 = 1e-10;

/// `N` replicates of `K` curves on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CurvePanel {
    grid: Vec<f64>,
    values: Vec<DMatrix<f64>>,
    location_ids: Vec<String>,
    coords: Option<Vec<[f64; 2]>>,
}

impl CurvePanel {
    pub fn new(grid: Vec<f64>, values: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = values.first().map(|v| v.nrows()).unwrap_or(0);
        let ids = (1..=k).map(|j| format!("s{j}")).collect();
        Self::with_locations(grid, values, ids, None)
    }

    pub fn with_locations(
        grid: Vec<f64>,
        values: Vec<DMatrix<f64>>,
        location_ids: Vec<String>,
        coords: Option<Vec<[f64; 2]>>,
    ) -> Result<Self> {
        if grid.len() < 4 {
            return Err(Error::InvalidInput(format!(
                "a curve panel needs at least 4 grid points, got {}",
                grid.len()
            )));
        }
        if grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("time grid must be finite and strictly increasing".into()));
        }
        if values.is_empty() {
            return Err(Error::InvalidInput("a curve panel needs at least one replicate".into()));
        }
        let k = values[0].nrows();
        if k == 0 {
            return Err(Error::InvalidInput("a curve panel needs at least one location".into()));
        }
        for (n, v) in values.iter().enumerate() {
            if v.shape() != (k, grid.len()) {
                return Err(Error::Dimension(format!(
                    "replicate {n} is {}x{}, expected {k}x{}",
                    v.nrows(),
                    v.ncols(),
                    grid.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("curve values"));
            }
        }
        if location_ids.len() != k {
            return Err(Error::Dimension(format!("{} location ids for {k} locations", location_ids.len())));
        }
        if let Some(c) = &coords {
            if c.len() != k {
                return Err(Error::Dimension(format!("{} coordinates for {k} locations", c.len())));
            }
        }
        Ok(CurvePanel {
            grid,
            values,
            location_ids,
            coords,
        })
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn k(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Replicate `n` as a `K x T` matrix.
    pub fn replicate(&self, n: usize) -> &DMatrix<f64> {
        &self.values[n]
    }

    pub fn replicates(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    pub fn location_ids(&self) -> &[String] {
        &self.location_ids
    }

    pub fn coords(&self) -> Option<&[[f64; 2]]> {
        self.coords.as_deref()
    }

    /// Pointwise sample mean over replicates.
    pub fn mean(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.k(), self.grid.len());
        for v in &self.values {
            m += v;
        }
        m / self.n() as f64
    }

    pub fn centered(&self) -> Vec<DMatrix<f64>> {
        let m = self.mean();
        self.values.iter().map(|v| v - &m).collect()
    }

    /// Same grid and locations, new values.
    pub fn with_values(&self, values: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::with_locations(self.grid.clone(), values, self.location_ids.clone(), self.coords.clone())
    }
}

/// Trapezoidal weights for the grid mapped affinely onto `[0, 1]`.
pub fn trapezoid_weights(grid: &[f64]) -> DVector<f64> {
    let t = grid.len();
    let span = grid[t - 1] - grid[0];
    let mut w = DVector::zeros(t);
    for j in 0..t - 1 {
        let h = (grid[j + 1] - grid[j]) / span;
        w[j] += 0.5 * h;
        w[j + 1] += 0.5 * h;
    }
    w
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisKind {
    Fourier,
    DataDriven,
}

/// Basis functions evaluated on the grid, one per row.
#[derive(Clone, Debug)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub functions: DMatrix<f64>,
    /// Eigenvalues of the data-driven bases, `None` for fixed bases.
    pub eigenvalues: Option<Vec<f64>>,
}

impl BasisSpec {
    pub fn j(&self) -> usize {
        self.functions.nrows()
    }

    /// Quadrature Gram matrix `Phi W Phi^T`.
    pub fn gram(&self, weights: &DVector<f64>) -> DMatrix<f64> {
        let pw = weighted(&self.functions, weights);
        &pw * self.functions.transpose()
    }

    fn truncated(&self, j: usize) -> BasisSpec {
        BasisSpec {
            kind: self.kind,
            functions: self.functions.rows(0, j).into_owned(),
            eigenvalues: self.eigenvalues.as_ref().map(|e| e[..j].to_vec()),
        }
    }
}

/// How many components to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Selection {
    /// Smallest count whose explained variance reaches the fraction.
    Threshold(f64),
    Fixed(usize),
}

impl Selection {
    fn validate(self, what: &str) -> Result<()> {
        match self {
            Selection::Threshold(t) if !(t > 0.0 && t < 1.0) => Err(Error::InvalidInput(format!(
                "{what} variance threshold must lie in (0, 1), got {t}"
            ))),
            Selection::Fixed(0) => Err(Error::InvalidInput(format!("{what} dimension must be at least 1"))),
            _ => Ok(()),
        }
    }
}

/// Scores ready for the separability tests, with the bases that produced them.
#[derive(Clone, Debug)]
pub struct ReductionResult {
    pub scores: ReplicatedMatrixSample<f64>,
    pub basis: BasisSpec,
    /// Spatial eigenvectors `u_l` as rows (`L x K`), space-time reduction only.
    pub spatial_modes: Option<DMatrix<f64>>,
    pub j: usize,
    pub l: Option<usize>,
    pub variance_explained_time: f64,
    pub variance_explained_space: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl ReductionResult {
    /// Rows of the score matrices (`K`, or `L` after spatial reduction).
    pub fn rows(&self) -> usize {
        self.scores.k()
    }

    /// The Monte Carlo likelihood ratio test requires `N > L J`.
    pub fn require_n_gt_lj(&self) -> Result<()> {
        let (n, l, j) = (self.scores.n(), self.rows(), self.j);
        if n <= l * j {
            return Err(Error::Precondition(format!(
                "Monte Carlo LRT requires N > LJ, got N = {n}, L = {l}, J = {j}"
            )));
        }
        Ok(())
    }
}

fn weighted(phi: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut out = phi.clone();
    for (c, wc) in w.iter().enumerate() {
        out.column_mut(c).scale_mut(*wc);
    }
    out
}

/// Constant, then `sqrt(2) sin(2 pi m t)`, `sqrt(2) cos(2 pi m t)` pairs on the
/// rescaled grid, Gram-Schmidt orthonormalized under the trapezoidal rule.
/// Candidates that are numerically dependent on earlier ones are skipped.
pub fn fourier_basis(grid: &[f64], max_functions: usize) -> BasisSpec {
    let t = grid.len();
    let w = trapezoid_weights(grid);
    let (t0, span) = (grid[0], grid[t - 1] - grid[0]);
    let x: Vec<f64> = grid.iter().map(|g| (g - t0) / span).collect();
    let target = max_functions.min(t);
    let two_pi = 2.0 * std::f64::consts::PI;
    let sqrt2 = std::f64::consts::SQRT_2;
    let ip = |a: &DVector<f64>, b: &DVector<f64>| a.component_mul(&w).dot(b);

    let mut kept: Vec<DVector<f64>> = Vec::new();
    let mut m = 0usize;
    let mut candidates: Vec<DVector<f64>> = vec![DVector::from_element(t, 1.0)];
    while kept.len() < target && m <= 2 * t {
        for mut v in candidates.drain(..) {
            if kept.len() == target {
                break;
            }
            let norm0 = ip(&v, &v).sqrt();
            for _ in 0..2 {
                for q in &kept {
                    let c = ip(&v, q);
                    v.axpy(-c, q, 1.0);
                }
            }
            let norm = ip(&v, &v).sqrt();
            if norm > 1e-8 * norm0 {
                kept.push(v / norm);
            }
        }
        m += 1;
        candidates.push(DVector::from_iterator(t, x.iter().map(|s| sqrt2 * (two_pi * m as f64 * s).sin())));
        candidates.push(DVector::from_iterator(t, x.iter().map(|s| sqrt2 * (two_pi * m as f64 * s).cos())));
    }
    let mut functions = DMatrix::zeros(kept.len(), t);
    for (j, v) in kept.iter().enumerate() {
        functions.set_row(j, &v.transpose());
    }
    BasisSpec {
        kind: BasisKind::Fourier,
        functions,
        eigenvalues: None,
    }
}

/// `Xi_n = X_n W Phi^T` for each centered replicate.
fn project(centered: &[DMatrix<f64>], basis: &BasisSpec, w: &DVector<f64>) -> Vec<DMatrix<f64>> {
    let pw_t = weighted(&basis.functions, w).transpose();
    centered.iter().map(|x| x * &pw_t).collect()
}

fn scores_sample(scores: Vec<DMatrix<f64>>) -> Result<ReplicatedMatrixSample<f64>> {
    ReplicatedMatrixSample::new(scores)
}

/// Procedure 1: scores on the Fourier basis, `J` minimal with explained
/// variance at least `tau` at every location (or pinned).
pub fn project_fixed_basis(panel: &CurvePanel, selection: Selection) -> Result<ReductionResult> {
    selection.validate("temporal")?;
    let w = trapezoid_weights(panel.grid());
    let full = fourier_basis(panel.grid(), panel.grid().len());
    let centered = panel.centered();
    let xi = project(&centered, &full, &w);
    let k = panel.k();
    let jmax = full.j();

    // explained[k][j] = cumulative fraction at location k using j+1 functions.
    let mut totals = vec![0.0; k];
    for x in &centered {
        for kk in 0..k {
            let row = x.row(kk);
            totals[kk] += row.component_mul(&row).transpose().dot(&w);
        }
    }
    let mut cum = DMatrix::<f64>::zeros(k, jmax);
    for s in &xi {
        for kk in 0..k {
            let mut acc = 0.0;
            for j in 0..jmax {
                acc += s[(kk, j)] * s[(kk, j)];
                cum[(kk, j)] += acc;
            }
        }
    }
    let worst = |j: usize| {
        (0..k)
            .map(|kk| if totals[kk] > 0.0 { cum[(kk, j - 1)] / totals[kk] } else { 1.0 })
            .fold(f64::INFINITY, f64::min)
    };
    let j = match selection {
        Selection::Fixed(j) => {
            if j > jmax {
                return Err(Error::InvalidInput(format!(
                    "J = {j} exceeds the {jmax} basis functions available on this grid"
                )));
            }
            j
        }
        Selection::Threshold(tau) => (1..=jmax).find(|&j| worst(j) >= tau - 1e-12).ok_or_else(|| {
            Error::InvalidInput(format!(
                "variance threshold {tau} is unattainable; at most {:.6} is explained with J = {jmax}",
                worst(jmax)
            ))
        })?,
    };
    let basis = full.truncated(j);
    let scores = xi.iter().map(|s| s.columns(0, j).into_owned()).collect();
    Ok(ReductionResult {
        scores: scores_sample(scores)?,
        basis,
        spatial_modes: None,
        j,
        l: None,
        variance_explained_time: worst(j),
        variance_explained_space: None,
        iterations: None,
        converged: true,
        warnings: Vec::new(),
    })
}

/// Eigenfunctions of a covariance kernel sampled on the grid: eigenpairs of
/// `W^{1/2} C W^{1/2}`, mapped back by `W^{-1/2}`.
pub fn fpca(cov: &DMatrix<f64>, w: &DVector<f64>) -> Result<(Vec<f64>, BasisSpec)> {
    let sw = w.map(f64::sqrt);
    let mut m = cov.clone();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            m[(r, c)] *= sw[r] * sw[c];
        }
    }
    let eig = sym_eigen(&SymMatrix::new(m)?);
    let t = w.len();
    let mut functions = DMatrix::zeros(t, t);
    for j in 0..t {
        let e = eig.vector(j);
        functions.set_row(j, &e.component_div(&sw).transpose());
    }
    let values: Vec<f64> = eig.values.iter().map(|l| l.max(0.0)).collect();
    Ok((
        values.clone(),
        BasisSpec {
            kind: BasisKind::DataDriven,
            functions,
            eigenvalues: Some(values),
        },
    ))
}

fn select_by_eigenvalues(values: &[f64], selection: Selection, what: &str) -> Result<(usize, f64)> {
    let total: f64 = values.iter().sum();
    let frac = |j: usize| {
        if total > 0.0 {
            values[..j].iter().sum::<f64>() / total
        } else {
            1.0
        }
    };
    let j = match selection {
        Selection::Fixed(j) => {
            if j > values.len() {
                return Err(Error::InvalidInput(format!(
                    "{what} dimension {j} exceeds the {} available components",
                    values.len()
                )));
            }
            j
        }
        Selection::Threshold(tau) => (1..=values.len())
            .find(|&j| frac(j) >= tau - 1e-12)
            .unwrap_or(values.len()),
    };
    Ok((j, frac(j)))
}

fn tie_warning(values: &[f64], j: usize, what: &str) -> Option<String> {
    let top = values.first().copied().unwrap_or(0.0).abs();
    let upto = (j + 1).min(values.len());
    (1..upto)
        .find(|&m| (values[m - 1] - values[m]).abs() <= TIE_RTOL * top && top > 0.0)
        .map(|m| {
            format!(
                "{what} eigenvalues {m} and {} are tied; only their common subspace is identified",
                m + 1
            )
        })
}

/// `(NK)^{-1} sum_n X_n^T U^{-1} X_n`.
fn weighted_temporal_cov(centered: &[DMatrix<f64>], u_inv: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, t) = centered[0].shape();
    let mut v = DMatrix::zeros(t, t);
    for x in centered {
        v += x.transpose() * u_inv * x;
    }
    v / (centered.len() * k) as f64
}

/// `(NJ)^{-1} sum_n sum_j xi_j xi_j^T / lambda_j` over the first `j` score columns.
fn variance_adjusted_spatial(scores: &[DMatrix<f64>], lambdas: &[f64], j: usize) -> Result<DMatrix<f64>> {
    let k = scores[0].nrows();
    let mut u = DMatrix::zeros(k, k);
    for s in scores {
        for jj in 0..j {
            if lambdas[jj] <= 0.0 {
                return Err(Error::Singular {
                    what: "temporal eigenvalue in spatial weighting",
                    iteration: 0,
                    condition: f64::INFINITY,
                });
            }
            let c = s.column(jj);
            u.ger(1.0 / lambdas[jj], &c, &c, 1.0);
        }
    }
    Ok(u / (scores.len() * j) as f64)
}

/// Algorithm 2: alternate a `U`-weighted temporal FPCA with the spatial
/// matrix of eigenvalue-standardized scores, then project on the final basis.
pub fn data_driven_basis(
    panel: &CurvePanel,
    selection: Selection,
    tol: f64,
    max_iter: usize,
) -> Result<ReductionResult> {
    selection.validate("temporal")?;
    if max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    let w = trapezoid_weights(panel.grid());
    let centered = panel.centered();
    let k = panel.k();
    let mut u = DMatrix::<f64>::identity(k, k);
    let mut converged = false;
    let mut iterations = 0;
    let mut last = None;
    while iterations < max_iter {
        iterations += 1;
        let u_inv = u
            .clone()
            .cholesky()
            .ok_or(Error::Singular {
                what: "spatial matrix U_i",
                iteration: iterations,
                condition: f64::INFINITY,
            })?
            .inverse();
        let v = weighted_temporal_cov(&centered, &u_inv);
        let (values, basis) = fpca(&v, &w)?;
        let (j, frac) = select_by_eigenvalues(&values, selection, "temporal")?;
        let basis = basis.truncated(j);
        let z = project(&centered, &basis, &w);
        let mut u_new = variance_adjusted_spatial(&z, &values, j)?;
        let tr = u_new.trace();
        if !(tr > 0.0) {
            return Err(Error::Singular {
                what: "spatial matrix U_i",
                iteration: iterations,
                condition: f64::INFINITY,
            });
        }
        u_new *= k as f64 / tr;
        let change = rel_change(&u_new, &u);
        u = u_new;
        last = Some((values, basis, j, frac, z));
        if change < tol {
            converged = true;
            break;
        }
    }
    let (values, basis, j, frac, z) = last.expect("at least one iteration");
    let warnings = tie_warning(&values, j, "temporal").into_iter().collect();
    Ok(ReductionResult {
        scores: scores_sample(z)?,
        basis,
        spatial_modes: None,
        j,
        l: None,
        variance_explained_time: frac,
        variance_explained_space: None,
        iterations: Some(iterations),
        converged,
        warnings,
    })
}

/// Procedure 3: pooled FPCA in time, then PCA of the variance-adjusted spatial
/// matrix; returns the `L x J` matrices `Z_n = [u_1 .. u_L]^T Xi_n`.
pub fn reduce_space_time(panel: &CurvePanel, time: Selection, space: Selection) -> Result<ReductionResult> {
    time.validate("temporal")?;
    space.validate("spatial")?;
    let w = trapezoid_weights(panel.grid());
    let centered = panel.centered();
    let k = panel.k();
    let pooled = weighted_temporal_cov(&centered, &DMatrix::identity(k, k));
    let (values, basis) = fpca(&pooled, &w)?;
    let (j, frac_t) = select_by_eigenvalues(&values, time, "temporal")?;
    let basis = basis.truncated(j);
    let xi = project(&centered, &basis, &w);

    let u_tilde = variance_adjusted_spatial(&xi, &values, j)?;
    let eig = sym_eigen(&SymMatrix::new(u_tilde)?);
    let svals: Vec<f64> = eig.values.iter().map(|l| l.max(0.0)).collect();
    let (l, frac_s) = select_by_eigenvalues(&svals, space, "spatial")?;
    let modes = eig.vectors.columns(0, l).transpose();
    let z: Vec<DMatrix<f64>> = xi.iter().map(|x| &modes * x).collect();

    let mut warnings: Vec<String> = tie_warning(&values, j, "temporal").into_iter().collect();
    warnings.extend(tie_warning(&svals, l, "spatial"));
    Ok(ReductionResult {
        scores: scores_sample(z)?,
        basis,
        spatial_modes: Some(modes),
        j,
        l: Some(l),
        variance_explained_time: frac_t,
        variance_explained_space: Some(frac_s),
        iterations: None,
        converged: true,
        warnings,
    })
}
