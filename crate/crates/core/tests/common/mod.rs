//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// A vector whose entries are sums of products `e_a e_b` of iid standard normals.
pub struct QuadraticForms {
    pub terms: Vec<Vec<(usize, usize)>>,
}

impl QuadraticForms {
    /// vec(E E^T) for a K x I matrix E, entry e(k, i) at flat index k + i K.
    pub fn outer_rows(k: usize, i: usize) -> Self {
        let mut terms = vec![Vec::new(); k * k];
        for s in 0..k {
            for r in 0..k {
                terms[r + s * k] = (0..i).map(|c| (r + c * k, s + c * k)).collect();
            }
        }
        QuadraticForms { terms }
    }

    /// vec(E^T E).
    pub fn outer_cols(k: usize, i: usize) -> Self {
        let mut terms = vec![Vec::new(); i * i];
        for s in 0..i {
            for r in 0..i {
                terms[r + s * i] = (0..k).map(|row| (row + r * k, row + s * k)).collect();
            }
        }
        QuadraticForms { terms }
    }

    /// vec(e e^T) with e = vec(E).
    pub fn outer_vec(k: usize, i: usize) -> Self {
        let r = k * i;
        let mut terms = vec![Vec::new(); r * r];
        for b in 0..r {
            for a in 0..r {
                terms[a + b * r] = vec![(a, b)];
            }
        }
        QuadraticForms { terms }
    }

    pub fn evaluate(&self, e: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.terms.len(),
            self.terms.iter().map(|t| t.iter().map(|&(a, b)| e[a] * e[b]).sum()),
        )
    }
}

/// Exact covariance by Isserlis: Cov(e_a e_b, e_c e_d) = d_ac d_bd + d_ad d_bc.
pub fn moment_covariance(x: &QuadraticForms, y: &QuadraticForms) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.terms.len(), y.terms.len());
    for (i, tx) in x.terms.iter().enumerate() {
        for (j, ty) in y.terms.iter().enumerate() {
            let mut acc = 0.0;
            for &(a, b) in tx {
                for &(c, d) in ty {
                    acc += ((a == c && b == d) as u8 + (a == d && b == c) as u8) as f64;
                }
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Sample cross-covariance of two quadratic-form vectors over `draws` draws.
pub fn sampled_covariance<R: Rng>(
    rng: &mut R,
    n_entries: usize,
    x: &QuadraticForms,
    y: &QuadraticForms,
    draws: usize,
) -> DMatrix<f64> {
    let (p, q) = (x.terms.len(), y.terms.len());
    let mut sx = DVector::zeros(p);
    let mut sy = DVector::zeros(q);
    let mut sxy = DMatrix::zeros(p, q);
    let mut e = vec![0.0; n_entries];
    for _ in 0..draws {
        for v in e.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let vx = x.evaluate(&e);
        let vy = y.evaluate(&e);
        sxy.ger(1.0, &vx, &vy, 1.0);
        sx += &vx;
        sy += &vy;
    }
    let n = draws as f64;
    sxy / n - (&sx / n) * (&sy / n).transpose()
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// One-sample KS distance to a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic two-sample KS critical value at level alpha.
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * (((n + m) as f64) / ((n * m) as f64)).sqrt()
}
