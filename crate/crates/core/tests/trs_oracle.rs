//! Brute-force checks of the inner maximization against sampling and
//! projected gradient ascent over the ε-sphere.

use advlin::trs::{svd_full, worst_case_perturbation, Branch};
use advlin::RngStream;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn objective(a: &DMatrix<f64>, b: &DVector<f64>, d: &DVector<f64>) -> f64 {
    let ad = a * d;
    ad.norm_squared() - 2.0 * ad.dot(b)
}

fn gaussian_vec<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn gaussian_mat<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(r, c, (0..r * c).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Best objective over uniformly sampled boundary points.
fn boundary_sampling<R: Rng>(rng: &mut R, a: &DMatrix<f64>, b: &DVector<f64>, eps: f64, count: usize) -> f64 {
    let n = a.ncols();
    let mut best = 0.0f64;
    for _ in 0..count {
        let d = gaussian_vec(rng, n).normalize() * eps;
        best = best.max(objective(a, b, &d));
    }
    best
}

/// Projected gradient ascent from random starts on the sphere.
fn projected_ascent<R: Rng>(rng: &mut R, a: &DMatrix<f64>, b: &DVector<f64>, eps: f64, restarts: usize) -> f64 {
    let n = a.ncols();
    let ata = a.transpose() * a;
    let atb = a.transpose() * b;
    let lip = 2.0 * ata.norm() + 1e-12;
    let mut best = 0.0f64;
    for _ in 0..restarts {
        let mut d = gaussian_vec(rng, n).normalize() * eps;
        for _ in 0..400 {
            let grad = (&ata * &d - &atb) * 2.0;
            d += grad / lip;
            let norm = d.norm();
            if norm > eps {
                d *= eps / norm;
            } else if norm < eps * 1e-3 {
                d = gaussian_vec(rng, n).normalize() * eps;
            }
        }
        best = best.max(objective(a, b, &d));
    }
    best
}

#[test]
fn matches_sampling_and_ascent_oracles() {
    let stream = RngStream::new(2024, 0);
    let mut worst_shortfall = f64::NEG_INFINITY;
    for inst in 0..1000u64 {
        let mut rng = stream.substream(inst);
        let n = rng.random_range(1..=5);
        let p = rng.random_range(1..=5);
        let a = gaussian_mat(&mut rng, p, n);
        let b = gaussian_vec(&mut rng, p);
        let eps = [0.1, 0.7, 1.0, 10.0][inst as usize % 4];
        let res = worst_case_perturbation(&a, &b, eps).unwrap();
        let sampled = boundary_sampling(&mut rng, &a, &b, eps, 10_000);
        let ascent = projected_ascent(&mut rng, &a, &b, eps, 50);
        let oracle = sampled.max(ascent);
        worst_shortfall = worst_shortfall.max(oracle - res.objective_gain);
        assert!(
            res.objective_gain >= oracle - 1e-9 * (1.0 + oracle.abs()),
            "instance {inst}: gain {} < oracle {oracle}",
            res.objective_gain
        );
        // The oracle itself must be close: PGA finds the global max for these sizes.
        assert!(
            (res.objective_gain - ascent).abs() <= 1e-6 * (1.0 + ascent.abs()),
            "instance {inst}: gain {} vs ascent {ascent}",
            res.objective_gain
        );
    }
    eprintln!("worst oracle shortfall: {worst_shortfall:e}");
}

#[test]
fn random_three_by_two_matches_oracle() {
    let mut rng = RngStream::new(5, 1).substream(0);
    let a = gaussian_mat(&mut rng, 3, 2);
    let b = gaussian_vec(&mut rng, 3);
    let res = worst_case_perturbation(&a, &b, 0.7).unwrap();
    let oracle = boundary_sampling(&mut rng, &a, &b, 0.7, 10_000).max(projected_ascent(&mut rng, &a, &b, 0.7, 50));
    assert!((res.objective_gain - oracle).abs() <= 1e-6);
}

fn kkt_residual(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64, d: &DVector<f64>) -> f64 {
    let n = a.ncols();
    let ata = a.transpose() * a;
    ((DMatrix::identity(n, n) * lambda - ata) * d + a.transpose() * b).norm()
}

fn instance() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, f64)> {
    (1usize..=5, 1usize..=5)
        .prop_flat_map(|(p, n)| {
            (
                prop::collection::vec(-3.0f64..3.0, p * n),
                prop::collection::vec(-3.0f64..3.0, p),
                prop::sample::select(vec![0.1, 1.0, 10.0]),
                Just((p, n)),
            )
        })
        .prop_map(|(av, bv, eps, (p, n))| (DMatrix::from_vec(p, n, av), DVector::from_vec(bv), eps))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn kkt_and_feasibility_hold((a, b, eps) in instance()) {
        let svd = svd_full(&a).unwrap();
        let res = svd.worst_case_perturbation(&b, eps).unwrap();
        let sigma1_sq = svd.sigma_max().powi(2);
        let dnorm = res.delta.norm();
        prop_assert!(dnorm <= eps * (1.0 + 1e-9));
        if res.branch != Branch::Degenerate {
            prop_assert!((dnorm - eps).abs() <= 1e-9 * eps, "norm {dnorm} vs eps {eps}");
        }
        prop_assert!(res.dual_lambda >= sigma1_sq - 1e-12);
        let atb = (a.transpose() * &b).norm();
        let kkt = kkt_residual(&a, &b, res.dual_lambda, &res.delta);
        prop_assert!(kkt <= 1e-8 * (res.dual_lambda * eps + atb), "kkt {kkt}");
        let slack = res.dual_lambda * (dnorm * dnorm - eps * eps);
        prop_assert!(slack.abs() <= 1e-8 * res.dual_lambda * eps * eps + 1e-300);
        let direct = objective(&a, &b, &res.delta);
        prop_assert!(res.objective_gain >= 0.0);
        prop_assert!((res.objective_gain - direct).abs() <= 1e-10 * (1.0 + direct.abs()).max(res.objective_gain));
        let loss = (&b - &a * &res.delta).norm_squared();
        prop_assert!((loss - (b.norm_squared() + res.objective_gain)).abs() <= 1e-10 * loss.max(1.0));
    }

    #[test]
    fn single_row_sign_law(row in prop::collection::vec(-3.0f64..3.0, 1..=5), b0 in -3.0f64..3.0, eps in 0.05f64..5.0) {
        let n = row.len();
        let a = DMatrix::from_row_slice(1, n, &row);
        let b = DVector::from_vec(vec![b0]);
        let atb = a.transpose() * &b;
        prop_assume!(atb.norm() > 1e-6);
        let res = worst_case_perturbation(&a, &b, eps).unwrap();
        let expected = -atb.normalize() * eps;
        prop_assert!((res.delta - expected).norm() <= 1e-9 * eps);
    }

    #[test]
    fn solution_is_continuous_in_b_scale((a, b, eps) in instance(), t in 0.5f64..2.0) {
        prop_assume!(b.norm() > 1e-3);
        let r1 = worst_case_perturbation(&a, &(&b * t), eps).unwrap();
        let r2 = worst_case_perturbation(&a, &(&b * (t * (1.0 + 1e-7))), eps).unwrap();
        // Objective is Lipschitz in b; the value must move continuously.
        prop_assert!((r1.objective_gain - r2.objective_gain).abs() <= 1e-4 * (1.0 + r1.objective_gain));
    }
}

#[test]
fn svd_reconstruction_random() {
    let mut rng = RngStream::new(11, 0).substream(0);
    for _ in 0..50 {
        let a = gaussian_mat(&mut rng, 4, 2);
        let s = svd_full(&a).unwrap();
        let rel = (s.reconstruct() - &a).norm() / a.norm();
        assert!(rel < 1e-10);
        assert!((s.v.transpose() * &s.v - DMatrix::identity(2, 2)).amax() < 1e-10);
        assert!((s.u.transpose() * &s.u - DMatrix::identity(4, 4)).amax() < 1e-10);
    }
}

#[test]
fn near_hard_case_is_accurate() {
    // b almost orthogonal to the top left singular vector.
    let a = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.5]);
    for tiny in [1e-3, 1e-6, 1e-9, 1e-12, 1e-15, 0.0] {
        let b = DVector::from_vec(vec![tiny, 0.2, 0.1]);
        let res = worst_case_perturbation(&a, &b, 1.0).unwrap();
        let kkt = kkt_residual(&a, &b, res.dual_lambda, &res.delta);
        let atb = (a.transpose() * &b).norm();
        assert!(kkt <= 1e-8 * (res.dual_lambda + atb), "tiny {tiny}: kkt {kkt}");
        assert!((res.delta.norm() - 1.0).abs() < 1e-9);
        let mut rng = RngStream::new(3, 3).substream(0);
        let oracle = projected_ascent(&mut rng, &a, &b, 1.0, 20);
        assert!(res.objective_gain >= oracle - 1e-9);
    }
}

#[test]
fn clustered_singular_values() {
    // Two nearly equal top singular values.
    let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0 - 1e-12]);
    let b = DVector::from_vec(vec![0.0, 1e-14]);
    let res = worst_case_perturbation(&a, &b, 0.5).unwrap();
    assert!((res.delta.norm() - 0.5).abs() < 1e-9);
    let mut rng = RngStream::new(4, 0).substream(0);
    let oracle = projected_ascent(&mut rng, &a, &b, 0.5, 20);
    assert!(res.objective_gain >= oracle - 1e-9);
}
