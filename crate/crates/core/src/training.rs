//! Stochastic-gradient training of linear estimators against `SR + λ·AR`, and
//! tracing of the (SR, AR) frontier over a grid of weights.
//!
//! The objective is minimized in the normalized form `(SR + λ·AR)/(1 + λ)`,
//! which has the same minimizer and stays bounded as `λ → ∞`. Writing
//! `AR = SR + GAP` it becomes `SR + θ·GAP` with `θ = λ/(1 + λ)`; `λ = ∞`
//! is pure adversarial training, `θ = 1`. The SR gradient is exact. The GAP
//! gradient is the batch mean of the envelope gradient of the adversarial loss
//! minus the plain least-squares gradient on the same draw.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::EstimationProblem;
use crate::linalg;
use crate::risk::{risk_study_with_epsilon, RiskEstimate};
use crate::rng::RngStream;
use crate::trs::{svd_full, SvdFactorization};

/// Training draws use this stream id under the configured seed.
pub const TRAIN_STREAM: u64 = 0x7472_6169_6e00_0000;
/// Frontier evaluation draws use this stream id, shared by every grid point.
pub const EVAL_STREAM: u64 = 0x6576_616c_0000_0000;
/// `‖A‖_F` beyond which training is aborted.
pub const DIVERGENCE_NORM: f64 = 1e6;
/// Fraction of final iterates that are averaged.
pub const TAIL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// The minimizer of the standard risk (`A⋆` for inverse problems).
    Nominal,
    Zeros,
    Given(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Weight on AR; `f64::INFINITY` trains on AR alone.
    pub lambda: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub n_iters: usize,
    /// Initial step. `None` picks `1 / (2(√λ_max(Σ_in) + ε)²)`.
    pub step_c0: Option<f64>,
    pub step_decay: f64,
    pub seed: u64,
    pub init: Init,
}

impl TrainConfig {
    pub fn new(lambda: f64, epsilon: f64, seed: u64) -> Self {
        Self {
            lambda,
            epsilon,
            batch_size: 32,
            n_iters: 5000,
            step_c0: None,
            step_decay: 0.5,
            seed,
            init: Init::Nominal,
        }
    }

    /// `λ/(1 + λ)`, or 1 for pure AR.
    pub fn theta(&self) -> f64 {
        if self.lambda.is_infinite() {
            1.0
        } else {
            self.lambda / (1.0 + self.lambda)
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if self.batch_size == 0 || self.n_iters == 0 {
            return bad("batch_size and n_iters must be positive".into());
        }
        if !(0.5..=1.0).contains(&self.step_decay) {
            return bad(format!("step_decay must lie in [0.5, 1], got {}", self.step_decay));
        }
        if let Some(c0) = self.step_c0 {
            if !(c0.is_finite() && c0 > 0.0) {
                return bad(format!("step_c0 must be positive, got {c0}"));
            }
        }
        Ok(())
    }
}

/// One point of the robustness–accuracy frontier.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoPoint {
    pub lambda: f64,
    pub a: DMatrix<f64>,
    /// Closed-form standard risk of `a`.
    pub sr: f64,
    pub ar: RiskEstimate,
}

/// Envelope gradient of `max_{‖δ‖≤ε} ‖y − A(x + δ)‖²` with respect to `A`.
pub fn adversarial_loss_grad(a: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>, eps: f64) -> Result<DMatrix<f64>> {
    let svd = svd_full(a)?;
    Ok(adversarial_grad_with(&svd, a, x, y, eps)?.0)
}

/// Returns the adversarial and plain gradients for one draw.
fn adversarial_grad_with(
    svd: &SvdFactorization,
    a: &DMatrix<f64>,
    x: &DVector<f64>,
    y: &DVector<f64>,
    eps: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let b = y - a * x;
    let delta = svd.worst_case_perturbation(&b, eps)?.delta;
    let z = x + delta;
    let r = y - a * &z;
    Ok((r * z.transpose() * -2.0, &b * x.transpose() * -2.0))
}

/// Step-by-step SGD state; [`train`] runs it to completion.
pub struct Trainer<'a, P: EstimationProblem + ?Sized> {
    problem: &'a P,
    config: TrainConfig,
    theta: f64,
    c0: f64,
    a: DMatrix<f64>,
    t: usize,
    tail_start: usize,
    tail_sum: DMatrix<f64>,
    tail_count: usize,
    stream: RngStream,
}

impl<'a, P: EstimationProblem + ?Sized> Trainer<'a, P> {
    pub fn new(problem: &'a P, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let a = match &config.init {
            Init::Nominal => problem.nominal_estimator()?,
            Init::Zeros => DMatrix::zeros(problem.output_dim(), problem.input_dim()),
            Init::Given(m) => {
                problem.check_shape(m)?;
                m.clone()
            }
        };
        let c0 = match config.step_c0 {
            Some(c) => c,
            None => {
                let top = linalg::eig_extremes(&problem.moments().input_cov).1.max(0.0);
                let scale = top.sqrt() + config.epsilon;
                if scale == 0.0 {
                    1.0
                } else {
                    0.5 / (scale * scale)
                }
            }
        };
        let tail_len = ((config.n_iters as f64 * TAIL_FRACTION).ceil() as usize).max(1);
        Ok(Self {
            problem,
            theta: config.theta(),
            c0,
            tail_start: config.n_iters - tail_len.min(config.n_iters) + 1,
            tail_sum: DMatrix::zeros(a.nrows(), a.ncols()),
            tail_count: 0,
            stream: RngStream::new(config.seed, TRAIN_STREAM),
            a,
            t: 0,
            config,
        })
    }

    pub fn current(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn iteration(&self) -> usize {
        self.t
    }

    pub fn step_size(&self, t: usize) -> f64 {
        self.c0 / (t as f64).powf(self.config.step_decay)
    }

    fn gradient(&self) -> Result<DMatrix<f64>> {
        let mut grad = self.problem.standard_risk_grad(&self.a);
        if self.theta == 0.0 || self.config.epsilon == 0.0 {
            return Ok(grad);
        }
        let svd = svd_full(&self.a)?;
        let batch = self.config.batch_size;
        let base = (self.t as u64 - 1) * batch as u64;
        let parts: Vec<DMatrix<f64>> = (0..batch as u64)
            .into_par_iter()
            .map(|j| {
                let s = self.problem.draw(&self.stream, base + j);
                let (adv, plain) = adversarial_grad_with(&svd, &self.a, &s.input, &s.target, self.config.epsilon)?;
                Ok(adv - plain)
            })
            .collect::<Result<_>>()?;
        let mut gap = DMatrix::zeros(self.a.nrows(), self.a.ncols());
        for p in &parts {
            gap += p;
        }
        grad += gap * (self.theta / batch as f64);
        Ok(grad)
    }

    pub fn step(&mut self) -> Result<()> {
        self.t += 1;
        let grad = self.gradient()?;
        let eta = self.step_size(self.t);
        self.a -= grad * eta;
        let norm = self.a.norm();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(Error::Divergence(format!(
                "||A||_F = {norm:e} at iteration {} with step {eta:e} (c0 = {:e}); reduce step_c0",
                self.t, self.c0
            )));
        }
        if self.t >= self.tail_start {
            self.tail_sum += &self.a;
            self.tail_count += 1;
        }
        Ok(())
    }

    /// Runs the remaining iterations and returns the tail average.
    pub fn run(mut self) -> Result<DMatrix<f64>> {
        while self.t < self.config.n_iters {
            self.step()?;
        }
        Ok(self.tail_sum / self.tail_count as f64)
    }
}

pub fn train<P: EstimationProblem + ?Sized>(problem: &P, config: &TrainConfig) -> Result<DMatrix<f64>> {
    Trainer::new(problem, config.clone())?.run()
}

/// Trains along `lambda_grid` with warm starts and evaluates each solution on
/// a common evaluation stream.
pub fn pareto_trace<P: EstimationProblem + ?Sized>(
    problem: &P,
    lambda_grid: &[f64],
    config: &TrainConfig,
    eval_samples: usize,
) -> Result<Vec<ParetoPoint>> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty".into()));
    }
    if lambda_grid
        .windows(2)
        .any(|w| w[0].is_nan() || w[1].is_nan() || w[0] > w[1])
    {
        return Err(Error::InvalidParameter("lambda grid must be nondecreasing".into()));
    }
    let eval = RngStream::new(config.seed, EVAL_STREAM);
    let mut cfg = config.clone();
    let mut points = Vec::with_capacity(lambda_grid.len());
    for &lambda in lambda_grid {
        cfg.lambda = lambda;
        let a = train(problem, &cfg)?;
        let study = risk_study_with_epsilon(problem, &a, cfg.epsilon, eval_samples, &eval)?;
        points.push(ParetoPoint {
            lambda,
            sr: problem.standard_risk(&a)?,
            ar: study.ar,
            a: a.clone(),
        });
        cfg.init = Init::Given(a);
    }
    Ok(points)
}
