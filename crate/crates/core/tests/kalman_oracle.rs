use advlin::kalman::{
    as_estimation_problem, build_stacked, estimator_ar_mc, estimator_risk_study, estimator_sr_closed, gap_lower_bounds,
    gap_upper_bound_general, is_observable, kalman_estimator, kalman_gap_lower_bound, kalman_gap_upper_bound,
    observability_gramian, recursive_kf, residual_covariance, simulate_rollout, LtiSystem, Regime,
};
use advlin::{linalg, pareto_trace, train, CovarianceSpec, Init, RngStream, TrainConfig};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_mat<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(r, c, (0..r * c).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn random_spd<R: Rng>(rng: &mut R, d: usize, floor: f64) -> CovarianceSpec {
    let b = gaussian_mat(rng, d, d);
    CovarianceSpec::new(
        &b * b.transpose() / d as f64 * 0.5 + DMatrix::identity(d, d) * floor,
        true,
    )
    .unwrap()
}

fn iso(d: usize, v: f64) -> CovarianceSpec {
    CovarianceSpec::isotropic(d, v).unwrap()
}

fn rotation(alpha: f64) -> LtiSystem {
    let beta = (1.0 - alpha * alpha).sqrt();
    LtiSystem::new(
        DMatrix::from_row_slice(2, 2, &[alpha, beta, -beta, alpha]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        iso(2, 1.0),
        iso(2, 0.1),
        iso(1, 0.1),
        5,
    )
    .unwrap()
}

/// Random observable system with spectral radius below 1.1.
fn random_system(seed: u64, n: usize, p: usize, horizon: usize) -> LtiSystem {
    let mut rng = RngStream::new(seed, 3).substream(0);
    loop {
        let a = gaussian_mat(&mut rng, n, n);
        let a = &a * (rng.random_range(0.3..1.1) / linalg::spectral_norm(&a));
        let sys = LtiSystem::new(
            a,
            gaussian_mat(&mut rng, p, n),
            random_spd(&mut rng, n, 0.2),
            random_spd(&mut rng, n, 0.05),
            random_spd(&mut rng, p, 0.05),
            horizon,
        )
        .unwrap();
        if is_observable(&sys) {
            return sys;
        }
    }
}

#[test]
fn stacked_form_matches_simulation() {
    for seed in 0..10 {
        let sys = random_system(seed, 3, 2, 6);
        for k in [0, 3, 6] {
            let st = build_stacked(&sys, k).unwrap();
            for idx in 0..5 {
                let r = simulate_rollout(&sys, &RngStream::new(seed, 9), idx);
                let v = DVector::from_iterator(14, r.sensor_noise.iter().flat_map(|v| v.iter().copied()));
                let y = &st.obs * &r.states[0] + &st.toeplitz * r.stacked_process_noise() + v;
                let ys = r.stacked_measurements();
                assert!((&y - &ys).amax() <= 1e-12 * (1.0 + ys.amax()));
                let xk = &st.a_pow_k * &r.states[0] + &st.gamma_k * r.stacked_process_noise();
                assert!((&xk - &r.states[k]).amax() <= 1e-12 * (1.0 + r.states[k].amax()));
            }
        }
    }
}

#[test]
fn stacked_and_recursive_filters_agree() {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let sys = random_system(100 + seed, 3, 1 + (seed as usize % 2), 5);
        let r = simulate_rollout(&sys, &RngStream::new(seed, 1), 0);
        let rec = recursive_kf(&sys, &r.measurements).unwrap();
        for (t, x_hat) in rec.iter().enumerate().take(6) {
            let sub = sys.with_horizon(t);
            let l = kalman_estimator(&sub, t).unwrap();
            let y = DVector::from_iterator(l.ncols(), r.measurements[..=t].iter().flat_map(|v| v.iter().copied()));
            worst = worst.max((&l * y - x_hat).amax());
        }
    }
    assert!(worst <= 1e-8, "max deviation {worst:e}");
}

#[test]
fn standard_risk_matches_rollouts() {
    let sys = random_system(7, 2, 1, 5);
    for k in [0, 2, 5] {
        let l = kalman_estimator(&sys, k).unwrap() * 0.8;
        let study = estimator_risk_study(&l, &sys, k, 0.0, 100_000, &RngStream::new(70, k as u64)).unwrap();
        let exact = estimator_sr_closed(&l, &sys, k).unwrap();
        assert!((study.sr.mean - exact).abs() <= 3.0 * study.sr.std_error);
        assert_eq!(study.ar, study.sr);
    }
}

#[test]
fn residual_covariance_matches_samples() {
    let sys = random_system(8, 3, 2, 4);
    let k = 2;
    let l = kalman_estimator(&sys, k).unwrap();
    let cov = residual_covariance(&l, &sys, k).unwrap();
    assert!((cov.trace() - estimator_sr_closed(&l, &sys, k).unwrap()).abs() < 1e-14);
    let stream = RngStream::new(80, 0);
    let n = 100_000;
    let mut acc = DMatrix::zeros(3, 3);
    for i in 0..n {
        let r = simulate_rollout(&sys, &stream, i);
        let e = &r.states[k] - &l * r.stacked_measurements();
        acc += &e * e.transpose();
    }
    let sample = acc / n as f64;
    assert!(linalg::relative_frobenius_error(&sample, cov.matrix()) < 0.05);
}

#[test]
fn kalman_estimator_is_first_order_optimal() {
    for seed in 0..5 {
        let sys = random_system(200 + seed, 2, 2, 4);
        for k in [0, 2, 4] {
            let l = kalman_estimator(&sys, k).unwrap();
            let base = estimator_sr_closed(&l, &sys, k).unwrap();
            let mut rng = RngStream::new(seed, 20).substream(k as u64);
            for _ in 0..20 {
                let d = gaussian_mat(&mut rng, l.nrows(), l.ncols());
                let d = &d / d.norm();
                assert!(estimator_sr_closed(&(&l + d * 1e-3), &sys, k).unwrap() >= base - 1e-12);
            }
            for _ in 0..100 {
                let other = &l + gaussian_mat(&mut rng, l.nrows(), l.ncols()) * (l.norm() / 3.0);
                assert!(estimator_sr_closed(&other, &sys, k).unwrap() >= base);
            }
        }
    }
}

#[test]
fn noiseless_limit_is_gramian_inverse() {
    let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.4, -0.2, 0.8]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.5]);
    let sys = LtiSystem::new(a.clone(), c, iso(2, 1.0), iso(2, 1e-14), iso(1, 1e-8), 4).unwrap();
    let k = 3;
    let l = kalman_estimator(&sys, k).unwrap();
    let st = build_stacked(&sys, k).unwrap();
    let wo = observability_gramian(&sys, 4).gramian;
    let limit = &st.a_pow_k * wo.try_inverse().unwrap() * st.obs.transpose();
    assert!((&l - limit).norm() < 1e-4);
    assert!(estimator_sr_closed(&l, &sys, k).unwrap() < 1e-4);
}

#[test]
fn gramian_is_monotone_in_horizon() {
    let sys = random_system(9, 3, 1, 8);
    let mut prev = observability_gramian(&sys, 0).gramian;
    for n in 1..=8 {
        let cur = observability_gramian(&sys, n);
        assert!(cur.lambda_min >= -1e-10);
        assert!(linalg::eig_extremes(&(&cur.gramian - &prev)).0 >= -1e-10);
        prev = cur.gramian;
    }
}

#[test]
fn zero_estimator_admits_no_attack() {
    let sys = rotation(0.95);
    let l = DMatrix::zeros(2, 6);
    let study = estimator_risk_study(&l, &sys, 5, 0.5, 2_000, &RngStream::new(1, 1)).unwrap();
    assert_eq!(study.gap.mean, 0.0);
    assert_eq!(study.ar, study.sr);
}

#[test]
fn zero_budget_matches_closed_form() {
    let sys = rotation(0.98);
    let l = kalman_estimator(&sys, 5).unwrap();
    let ar = estimator_ar_mc(&l, &sys, 5, 0.0, 100_000, &RngStream::new(2, 2)).unwrap();
    let sr = estimator_sr_closed(&l, &sys, 5).unwrap();
    assert!((ar.mean - sr).abs() <= 3.0 * ar.std_error);
}

fn assert_sandwich(sys: &LtiSystem, l: &DMatrix<f64>, k: usize, eps: f64, seed: u64) {
    let study = estimator_risk_study(l, sys, k, eps, 20_000, &RngStream::new(seed, 5)).unwrap();
    let slack = 3.0 * study.gap.std_error;
    let (lo, lo_frob) = gap_lower_bounds(l, sys, k, eps).unwrap();
    let hi = gap_upper_bound_general(l, sys, k, eps).unwrap();
    assert!(lo_frob <= lo * (1.0 + 1e-12));
    assert!(lo <= study.gap.mean + slack, "lower {lo} vs gap {}", study.gap.mean);
    assert!(study.gap.mean <= hi + slack, "gap {} vs upper {hi}", study.gap.mean);
}

#[test]
fn general_bounds_sandwich_gap() {
    for seed in 0..8 {
        let sys = random_system(300 + seed, 3, 2, 4);
        let k = seed as usize % 5;
        let l = kalman_estimator(&sys, k).unwrap();
        assert_sandwich(&sys, &l, k, 0.5, seed);
        let mut rng = RngStream::new(seed, 30).substream(0);
        let other = gaussian_mat(&mut rng, 3, 10) * 0.3;
        assert_sandwich(&sys, &other, k, 0.5, seed + 50);
    }
}

#[test]
fn kalman_bounds_hold_on_rotation_family() {
    let mut uppers = Vec::new();
    for alpha in [0.95, 0.98, 0.99] {
        let sys = rotation(alpha);
        let l = kalman_estimator(&sys, 5).unwrap();
        let study = estimator_risk_study(&l, &sys, 5, 0.5, 20_000, &RngStream::new(3, 3)).unwrap();
        let slack = 3.0 * study.gap.std_error;
        let lb = kalman_gap_lower_bound(&sys, 5, 0.5).unwrap();
        let (ub, _) = kalman_gap_upper_bound(&sys, 5, 0.5).unwrap();
        assert!(lb <= study.gap.mean + slack);
        assert!(study.gap.mean <= ub + slack);
        uppers.push(ub);
    }
    // λ_min(W_o) decreases from α = 0.95 to 0.99.
    assert!(uppers[0] < uppers[1] && uppers[1] < uppers[2]);
}

#[test]
fn refined_regime_bound_holds() {
    let alpha: f64 = 0.95;
    let beta = (1.0 - alpha * alpha).sqrt();
    let sys = LtiSystem::new(
        DMatrix::from_row_slice(2, 2, &[alpha, beta, -beta, alpha]),
        DMatrix::identity(2, 2),
        iso(2, 1.0),
        iso(2, 1.0),
        iso(2, 0.1),
        5,
    )
    .unwrap();
    let (ub, regime) = kalman_gap_upper_bound(&sys, 5, 0.5).unwrap();
    assert_eq!(regime, Regime::HighObservability);
    let l = kalman_estimator(&sys, 5).unwrap();
    let study = estimator_risk_study(&l, &sys, 5, 0.5, 20_000, &RngStream::new(4, 4)).unwrap();
    assert!(study.gap.mean <= ub + 3.0 * study.gap.std_error);
}

#[test]
fn standard_training_recovers_kalman_estimator() {
    let sys = rotation(0.95);
    let prob = as_estimation_problem(&sys, 5, 0.5).unwrap();
    let cfg = TrainConfig {
        init: Init::Zeros,
        n_iters: 200_000,
        ..TrainConfig::new(0.0, 0.5, 1)
    };
    let l = train(&prob, &cfg).unwrap();
    let lhat = kalman_estimator(&sys, 5).unwrap();
    assert!((l - lhat).norm() < 1e-4);
}

#[test]
fn zero_budget_frontier_collapses() {
    let sys = rotation(0.95);
    let prob = as_estimation_problem(&sys, 5, 0.0).unwrap();
    let cfg = TrainConfig {
        n_iters: 200,
        ..TrainConfig::new(0.0, 0.0, 1)
    };
    let pts = pareto_trace(&prob, &[0.0, 1.0, f64::INFINITY], &cfg, 5_000).unwrap();
    let sr = estimator_sr_closed(&kalman_estimator(&sys, 5).unwrap(), &sys, 5).unwrap();
    for p in &pts {
        assert!((p.sr - sr).abs() < 1e-12);
        assert!((p.ar.mean - p.sr).abs() <= 3.0 * p.ar.std_error);
    }
}
