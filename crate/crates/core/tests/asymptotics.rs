use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sepkron::asymptotics::{
    degrees_of_freedom, fisher_sigma, fisher_uv, identity_w_matrix, null_w_matrix, null_w_matrix_congruent,
    AsymptoticsConfig,
};
use sepkron::linalg::{kron, SymMatrix};
use sepkron::qmatrices::QMatrixSet;

fn random_spd(rng: &mut ChaCha8Rng, dim: usize, trace: Option<f64>) -> SymMatrix<f64> {
    let b = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let m = &b * b.transpose() / dim as f64 + DMatrix::identity(dim, dim) * 0.3;
    let m = match trace {
        Some(t) => &m * (t / m.trace()),
        None => m,
    };
    SymMatrix::new(m).unwrap()
}

fn random_sym(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<f64> {
    let b = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    (&b + b.transpose()) * 0.5
}

/// Expected negative log-likelihood per observation, up to constants:
/// `(log det S + tr(S^{-1} S0)) / 2`.
fn expected_nll(s: &DMatrix<f64>, s0: &DMatrix<f64>) -> f64 {
    let ch = s.clone().cholesky().expect("positive definite");
    let logdet = 2.0 * ch.l().diagonal().iter().map(|x| x.ln()).sum::<f64>();
    0.5 * (logdet + (ch.inverse() * s0).trace())
}

/// Second directional derivative by central differences.
fn second_difference(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h)
}

fn vec_of(m: &DMatrix<f64>) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(m.as_slice())
}

#[test]
fn fisher_uv_matches_finite_difference_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (k, i) in [(2, 2), (2, 3), (3, 2)] {
        let u = random_spd(&mut rng, k, Some(k as f64));
        let v = random_spd(&mut rng, i, None);
        let q = QMatrixSet::<f64>::new(k, i).unwrap();
        let info = fisher_uv(&u, &v, &q, 1e-12).unwrap();
        let s0 = kron(v.as_matrix(), u.as_matrix());
        for _ in 0..5 {
            let eu = random_sym(&mut rng, k);
            let ev = random_sym(&mut rng, i);
            let f = |h: f64| {
                let s = kron(&(v.as_matrix() + &ev * h), &(u.as_matrix() + &eu * h));
                expected_nll(&s, &s0)
            };
            let oracle = second_difference(f, 1e-4);
            let d = vec_of(&eu).iter().chain(vec_of(&ev).iter()).copied().collect::<Vec<_>>();
            let d = nalgebra::DVector::from_vec(d);
            let quad = (info.as_matrix() * &d).dot(&d);
            assert!((quad - oracle).abs() < 1e-5 * oracle.abs().max(1.0), "K={k} I={i}: {quad} vs {oracle}");
        }
    }
}

#[test]
fn fisher_sigma_matches_finite_difference_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for r in [2, 4, 6] {
        let sigma = random_spd(&mut rng, r, None);
        let q = QMatrixSet::<f64>::new(r, 1).unwrap();
        let info = fisher_sigma(&sigma, &q.q_r, 1e-12).unwrap();
        let s0 = sigma.as_matrix().clone();
        for _ in 0..5 {
            let e = random_sym(&mut rng, r);
            let oracle = second_difference(|h| expected_nll(&(&s0 + &e * h), &s0), 1e-4);
            let d = vec_of(&e);
            let quad = (info.as_matrix() * &d).dot(&d);
            assert!((quad - oracle).abs() < 1e-5 * oracle.abs().max(1.0), "R={r}: {quad} vs {oracle}");
        }
    }
}

#[test]
fn rank_of_w_is_degrees_of_freedom() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let cfg = AsymptoticsConfig::default();
    for (k, i) in [(2, 2), (2, 3), (3, 2), (3, 3)] {
        for _ in 0..3 {
            let u = random_spd(&mut rng, k, Some(k as f64));
            let v = random_spd(&mut rng, i, None);
            let (_, w) = null_w_matrix(&u, &v, &cfg).unwrap();
            assert_eq!(w.rank, degrees_of_freedom(k, i), "K={k} I={i}");
        }
    }
}

#[test]
fn congruent_w_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let cfg = AsymptoticsConfig::default();
    for (k, i) in [(2, 2), (3, 2), (2, 4)] {
        let w0 = identity_w_matrix::<f64>(k, i, &cfg).unwrap();
        for _ in 0..3 {
            let u = random_spd(&mut rng, k, Some(k as f64));
            let v = random_spd(&mut rng, i, None);
            let (_, direct) = null_w_matrix(&u, &v, &cfg).unwrap();
            let cong = null_w_matrix_congruent(&u, &v, &w0, cfg.rtol).unwrap();
            let scale = direct.w.as_matrix().amax();
            assert!((cong.w.as_matrix() - direct.w.as_matrix()).amax() < 1e-10 * scale);
            assert_eq!(cong.rank, direct.rank);
            for (a, b) in cong.eigenvalues.iter().zip(&direct.eigenvalues) {
                assert!((a - b).abs() < 1e-10 * scale);
            }
        }
    }
}

#[test]
fn w_depends_on_u_v_through_kronecker_product() {
    // rescaling U by c and V by 1/c leaves V (x) U, hence W, unchanged
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let cfg = AsymptoticsConfig::default();
    let u = random_spd(&mut rng, 2, Some(2.0));
    let v = random_spd(&mut rng, 3, None);
    let w0 = identity_w_matrix::<f64>(2, 3, &cfg).unwrap();
    let a = null_w_matrix_congruent(&u, &v, &w0, cfg.rtol).unwrap();
    let v2 = v.scale(4.0);
    let b = null_w_matrix_congruent(&u, &v2, &w0, cfg.rtol).unwrap();
    assert!((b.w.as_matrix() - a.w.as_matrix() * 16.0).amax() < 1e-10 * b.w.as_matrix().amax());
}
