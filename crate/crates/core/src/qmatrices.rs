//! Covariance matrices of quadratic forms in a `K x I` standard normal matrix `E`.
//!
//! With `R = K I` and `e = vec(E)`:
//!
//! | matrix       | identity                                   | shape        |
//! |--------------|--------------------------------------------|--------------|
//! | `Q_K`        | `Cov(vec(E E^T)) = 2 I Q_K`                | `K^2 x K^2`  |
//! | `Q_{K,I}`    | `Cov(vec(E E^T), vec(E^T E)) = 2 sqrt(IK) Q_{K,I}` | `K^2 x I^2` |
//! | `Q~_{R,K}`   | `Cov(vec(e e^T), vec(E E^T)) = 2 sqrt(I) Q~` | `R^2 x K^2` |
//! | `Q^_{R,I}`   | `Cov(vec(e e^T), vec(E^T E)) = 2 sqrt(K) Q^` | `R^2 x I^2` |
//!
//! The constructions below follow the index arithmetic of the closed-form
//! definitions literally (1-based indices, floor division), translated to
//! 0-based storage only when writing entries.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default cap on `R = K * I` for dense construction.
pub const DEFAULT_MAX_R: usize = 40;

/// `Q_K`: the symmetrizer `(I + C_{K,K}) / 2`, built from its four-case definition.
pub fn build_q_sym<T: Scalar>(k: usize) -> DMatrix<T> {
    let n = k * k;
    let half = T::of(0.5);
    let mut q = DMatrix::zeros(n, n);
    for i in 1..=n {
        let r = (i - 1) % k;
        // partner index of i under transposition of the K x K matrix
        let partner = 1 + ((i - 1) - r) / k + r * k;
        let on_diag_of_square = (1..=k).any(|kk| i == kk + (kk - 1) * k);
        for j in 1..=n {
            let v = if i == j {
                if on_diag_of_square {
                    T::one()
                } else {
                    half
                }
            } else if j == partner {
                half
            } else {
                continue;
            };
            q[(i - 1, j - 1)] = v;
        }
    }
    q
}

/// `Q_{K,I}`: `(K I)^{-1/2}` at rows `k1 + K (k1 - 1)` and columns `k2 + I (k2 - 1)`.
pub fn build_q_cross<T: Scalar>(k: usize, i: usize) -> DMatrix<T> {
    let v = T::one() / T::of_usize(k * i).sqrt();
    let mut q = DMatrix::zeros(k * k, i * i);
    for k1 in 1..=k {
        for k2 in 1..=i {
            q[(k1 + k * (k1 - 1) - 1, k2 + i * (k2 - 1) - 1)] = v;
        }
    }
    q
}

/// Decodes a 1-based row index of `vec(e e^T)` into `(l, k, p, m)`, where the
/// row pairs `E[m, p]` with `E[k, l]`.
fn decode_row(row: usize, k: usize, i: usize) -> (usize, usize, usize, usize) {
    let ksq_i = k * k * i;
    let ki = k * i;
    let l = 1 + (row - 1) / ksq_i;
    let kk = 1 + (row - 1 - (l - 1) * ksq_i) / ki;
    let p = 1 + (row - 1 - (l - 1) * ksq_i - (kk - 1) * ki) / k;
    let m = row - (l - 1) * ksq_i - (kk - 1) * ki - (p - 1) * k;
    (l, kk, p, m)
}

/// `Q~_{R,K}`, the `R^2 x K^2` cross-covariance of `vec(e e^T)` with `vec(E E^T)`.
pub fn build_q_tilde<T: Scalar>(k: usize, i: usize) -> DMatrix<T> {
    let r = k * i;
    let full = T::one() / T::of_usize(i).sqrt();
    let half = full * T::of(0.5);
    let mut q = DMatrix::zeros(r * r, k * k);
    for row in 1..=r * r {
        let (l, kk, p, m) = decode_row(row, k, i);
        if p == l && m != kk {
            q[(row - 1, m + (kk - 1) * k - 1)] = half;
            q[(row - 1, kk + (m - 1) * k - 1)] = half;
        }
        if p == l && m == kk {
            q[(row - 1, m + (m - 1) * k - 1)] = full;
        }
    }
    q
}

/// `Q^_{R,I}`, the `R^2 x I^2` cross-covariance of `vec(e e^T)` with `vec(E^T E)`.
pub fn build_q_breve<T: Scalar>(k: usize, i: usize) -> DMatrix<T> {
    let r = k * i;
    let full = T::one() / T::of_usize(k).sqrt();
    let half = full * T::of(0.5);
    let mut q = DMatrix::zeros(r * r, i * i);
    for row in 1..=r * r {
        let (l, kk, p, m) = decode_row(row, k, i);
        if m == kk && p != l {
            q[(row - 1, p + (l - 1) * i - 1)] = half;
            q[(row - 1, l + (p - 1) * i - 1)] = half;
        }
        if m == kk && p == l {
            q[(row - 1, l + (l - 1) * i - 1)] = full;
        }
    }
    q
}

/// All Q matrices needed for a `K x I` problem.
#[derive(Clone, Debug)]
pub struct QMatrixSet<T: Scalar> {
    pub k: usize,
    pub i: usize,
    pub r: usize,
    pub q_k: DMatrix<T>,
    pub q_i: DMatrix<T>,
    pub q_cross: DMatrix<T>,
    pub q_tilde: DMatrix<T>,
    pub q_breve: DMatrix<T>,
    pub q_r: DMatrix<T>,
}

impl<T: Scalar> QMatrixSet<T> {
    pub fn new(k: usize, i: usize) -> Result<Self> {
        Self::with_limit(k, i, DEFAULT_MAX_R)
    }

    pub fn with_limit(k: usize, i: usize, max_r: usize) -> Result<Self> {
        if k == 0 || i == 0 {
            return Err(Error::InvalidInput(format!(
                "Q matrices need K, I >= 1, got K={k}, I={i}"
            )));
        }
        let r = k * i;
        if r > max_r {
            return Err(Error::TooLarge {
                what: "K*I for Q matrices",
                value: r,
                limit: max_r,
            });
        }
        Ok(QMatrixSet {
            k,
            i,
            r,
            q_k: build_q_sym(k),
            q_i: build_q_sym(i),
            q_cross: build_q_cross(k, i),
            q_tilde: build_q_tilde(k, i),
            q_breve: build_q_breve(k, i),
            q_r: build_q_sym(r),
        })
    }

    /// `Q_{I,K}`, taken as the transpose of `Q_{K,I}`.
    pub fn q_cross_t(&self) -> DMatrix<T> {
        self.q_cross.transpose()
    }
}

/// Which Q matrix to build, as named on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QKind {
    Sym,
    Cross,
    Tilde,
    Breve,
}

impl std::str::FromStr for QKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sym" => Ok(QKind::Sym),
            "cross" => Ok(QKind::Cross),
            "tilde" => Ok(QKind::Tilde),
            "breve" => Ok(QKind::Breve),
            other => Err(Error::InvalidInput(format!(
                "unknown Q matrix '{other}' (expected sym, cross, tilde or breve)"
            ))),
        }
    }
}

/// Builds one Q matrix under the dense-size guard. `Sym` uses `K` only.
pub fn build<T: Scalar>(which: QKind, k: usize, i: usize, max_r: usize) -> Result<DMatrix<T>> {
    if k == 0 || i == 0 {
        return Err(Error::InvalidInput("K and I must be >= 1".into()));
    }
    if k * i > max_r {
        return Err(Error::TooLarge {
            what: "K*I for Q matrices",
            value: k * i,
            limit: max_r,
        });
    }
    Ok(match which {
        QKind::Sym => build_q_sym(k),
        QKind::Cross => build_q_cross(k, i),
        QKind::Tilde => build_q_tilde(k, i),
        QKind::Breve => build_q_breve(k, i),
    })
}
