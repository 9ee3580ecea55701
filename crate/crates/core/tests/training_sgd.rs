use advlin::{
    adversarial_loss_grad, pareto_trace, risk_study, train, worst_case_perturbation, CovarianceSpec, EstimationProblem,
    Init, LinearInverseProblem, RngStream, TrainConfig, Trainer,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_mat<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_iterator(r, c, (0..r * c).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

fn max_loss(a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>, eps: f64) -> f64 {
    let b = y - a * x;
    b.norm_squared() + worst_case_perturbation(a, &b, eps).unwrap().objective_gain
}

#[test]
fn envelope_gradient_matches_finite_differences() {
    let h = 1e-6;
    let mut worst = 0.0f64;
    for inst in 0..60u64 {
        let mut rng = RngStream::new(8, 0).substream(inst);
        let a = gaussian_mat(&mut rng, 3, 2);
        let x = gaussian_mat(&mut rng, 2, 1).column(0).into_owned();
        let y = gaussian_mat(&mut rng, 3, 1).column(0).into_owned();
        let eps = [0.1, 0.5, 1.0][inst as usize % 3];
        let g = adversarial_loss_grad(&a, &x, &y, eps).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[(i, j)] += h;
                am[(i, j)] -= h;
                let fd = (max_loss(&ap, &x, &y, eps) - max_loss(&am, &x, &y, eps)) / (2.0 * h);
                worst = worst.max((fd - g[(i, j)]).abs());
            }
        }
    }
    assert!(worst <= 1e-4, "max entrywise error {worst:e}");
}

fn problem(n: usize, sx: f64, sw: f64, eps: f64, seed: u64) -> LinearInverseProblem {
    let mut rng = RngStream::new(seed, 1).substream(0);
    LinearInverseProblem::new(
        gaussian_mat(&mut rng, n, n),
        CovarianceSpec::isotropic(n, sx).unwrap(),
        CovarianceSpec::isotropic(n, sw).unwrap(),
        eps,
    )
    .unwrap()
}

#[test]
fn standard_weight_recovers_truth_from_zero() {
    let prob = problem(3, 1.0, 0.1, 0.5, 1);
    let cfg = TrainConfig {
        init: Init::Zeros,
        ..TrainConfig::new(0.0, 0.5, 3)
    };
    let a = train(&prob, &cfg).unwrap();
    assert!((a - prob.a_star()).norm() < 1e-6);
}

#[test]
fn pure_adversarial_at_zero_budget_recovers_truth() {
    let prob = problem(3, 1.0, 0.1, 0.0, 2);
    let cfg = TrainConfig {
        init: Init::Zeros,
        ..TrainConfig::new(f64::INFINITY, 0.0, 3)
    };
    let a = train(&prob, &cfg).unwrap();
    assert!((a - prob.a_star()).norm() < 1e-6);
}

#[test]
fn standard_loss_decreases_every_step() {
    let prob = problem(3, 1.0, 0.1, 0.5, 3);
    let cfg = TrainConfig {
        init: Init::Zeros,
        step_c0: Some(0.05),
        n_iters: 200,
        ..TrainConfig::new(0.0, 0.5, 3)
    };
    let mut trainer = Trainer::new(&prob, cfg).unwrap();
    let mut prev = prob.standard_risk(trainer.current()).unwrap();
    for _ in 0..200 {
        trainer.step().unwrap();
        let cur = prob.standard_risk(trainer.current()).unwrap();
        assert!(cur < prev || cur - prob.sigma_w().trace() < 1e-14);
        prev = cur;
    }
}

#[test]
fn adversarial_training_shrinks() {
    let prob = problem(5, 0.5, 0.1, 0.5, 4);
    let a = train(&prob, &TrainConfig::new(f64::INFINITY, 0.5, 11)).unwrap();
    assert!(
        a.norm() < prob.a_star().norm(),
        "{} vs {}",
        a.norm(),
        prob.a_star().norm()
    );
}

#[test]
fn single_weight_frontier_is_the_nominal_point() {
    let prob = problem(3, 1.0, 0.1, 0.5, 5);
    let cfg = TrainConfig::new(0.0, 0.5, 12);
    let pts = pareto_trace(&prob, &[0.0], &cfg, 20_000).unwrap();
    assert_eq!(pts.len(), 1);
    assert!((&pts[0].a - prob.a_star()).norm() < 1e-12);
    let reference = risk_study(&prob, prob.a_star(), 20_000, &RngStream::new(99, 0)).unwrap();
    assert!((pts[0].sr - prob.standard_risk(prob.a_star()).unwrap()).abs() < 1e-12);
    let se = (pts[0].ar.std_error.powi(2) + reference.ar.std_error.powi(2)).sqrt();
    assert!((pts[0].ar.mean - reference.ar.mean).abs() <= 3.0 * se);
}

#[test]
fn frontier_is_monotone() {
    let prob = problem(3, 1.0, 0.1, 0.5, 6);
    let grid = [0.0, 0.1, 0.3, 1.0, 3.0, 10.0];
    let pts = pareto_trace(&prob, &grid, &TrainConfig::new(0.0, 0.5, 13), 20_000).unwrap();
    for w in pts.windows(2) {
        let slack = 3.0 * w[0].ar.std_error.max(w[1].ar.std_error);
        assert!(w[0].sr <= w[1].sr + slack, "SR {} > {}", w[0].sr, w[1].sr);
        assert!(
            w[0].ar.mean >= w[1].ar.mean - slack,
            "AR {} < {}",
            w[0].ar.mean,
            w[1].ar.mean
        );
    }
}

#[test]
fn training_is_reproducible() {
    let prob = problem(3, 1.0, 0.1, 0.5, 7);
    let cfg = TrainConfig {
        n_iters: 300,
        ..TrainConfig::new(1.0, 0.5, 5)
    };
    let pool = |k| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
    let a1 = pool(1).install(|| train(&prob, &cfg).unwrap());
    let a4 = pool(4).install(|| train(&prob, &cfg).unwrap());
    assert_eq!(a1, a4);
}
