//! Shared helpers for unit tests.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::SymMatrix;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Well-conditioned random SPD matrix.
pub fn random_spd<R: Rng>(rng: &mut R, dim: usize) -> SymMatrix<f64> {
    let b = random_matrix(rng, dim, dim);
    let m = &b * b.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.5;
    SymMatrix::new(m).unwrap()
}

/// Random SPD matrix rescaled to trace `dim`.
pub fn random_spd_trace_normalized<R: Rng>(rng: &mut R, dim: usize) -> SymMatrix<f64> {
    let a = random_spd(rng, dim);
    let t = a.trace();
    a.scale(dim as f64 / t)
}
