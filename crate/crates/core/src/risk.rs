//! Standard and adversarial risk of linear estimators, and the analytic
//! sandwich on their gap.
//!
//! All Monte Carlo estimators evaluate SR and AR on the same draws, so the
//! gap AR − SR is estimated pathwise from the per-sample objective gain of the
//! inner maximization.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::EstimationProblem;
use crate::linalg;
use crate::model::LinearInverseProblem;
use crate::rng::{mean_and_variance, RngStream};
use crate::trs::svd_full;

/// Default Monte Carlo sample count.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Tolerance for treating `Σ_w` as `σ_w²I`.
pub const ISOTROPY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n_samples)`.
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl RiskEstimate {
    pub fn from_values(values: &[f64], seed: u64) -> Self {
        let (mean, var) = mean_and_variance(values);
        let n = values.len();
        Self {
            mean,
            std_error: (var.max(0.0) / n as f64).sqrt(),
            n_samples: n,
            seed,
        }
    }
}

/// Lower and upper bounds on `AR(A) − SR(A)`.
///
/// `lower = 2ε·cross_term + ε²·lambda_min` and
/// `upper = 2ε·cross_term_upper + ε²·lambda_max`. For Monte Carlo bounds both
/// cross terms are the same estimate of `E‖Aᵀ(y − Ax)‖`; the closed-form
/// bounds at `A⋆` use a lower and an upper estimate of that expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapBounds {
    pub lower: f64,
    pub upper: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub cross_term: f64,
    pub cross_term_upper: f64,
    /// Standard error of the cross term; 0 for closed forms.
    pub cross_term_std_error: f64,
}

impl GapBounds {
    fn assemble(eps: f64, cross_lo: f64, cross_hi: f64, se: f64, lambda_min: f64, lambda_max: f64) -> Self {
        Self {
            lower: 2.0 * eps * cross_lo + eps * eps * lambda_min,
            upper: 2.0 * eps * cross_hi + eps * eps * lambda_max,
            lambda_min,
            lambda_max,
            cross_term: cross_lo,
            cross_term_upper: cross_hi,
            cross_term_std_error: se,
        }
    }
}

/// Per-sample quantities for one estimator on one stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRisk {
    /// `‖b‖²` with `b = target − A·input`.
    pub standard: f64,
    /// `‖b‖² + gain`, the worst-case loss.
    pub adversarial: f64,
    /// `‖Aᵀb‖`.
    pub cross: f64,
}

impl SampleRisk {
    pub fn gap(&self) -> f64 {
        self.adversarial - self.standard
    }
}

/// SR, AR, gap and cross-term estimates from one set of draws.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskStudy {
    pub sr: RiskEstimate,
    pub ar: RiskEstimate,
    pub gap: RiskEstimate,
    pub cross_term: RiskEstimate,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub epsilon: f64,
}

impl RiskStudy {
    /// Gap bounds assembled from this study's cross-term estimate.
    pub fn bounds(&self) -> GapBounds {
        GapBounds::assemble(
            self.epsilon,
            self.cross_term.mean,
            self.cross_term.mean,
            self.cross_term.std_error,
            self.lambda_min,
            self.lambda_max,
        )
    }
}

/// Evaluates every sample of `stream` in `0..n_samples`. Order of the returned
/// vector is the sample index, whatever the thread count.
pub fn sample_risks<P: EstimationProblem + ?Sized>(
    problem: &P,
    a: &DMatrix<f64>,
    eps: f64,
    n_samples: usize,
    stream: &RngStream,
) -> Result<Vec<SampleRisk>> {
    problem.check_shape(a)?;
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be finite and >= 0, got {eps}"
        )));
    }
    let svd = svd_full(a)?;
    let at = a.transpose();
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = problem.draw(stream, i);
            let b = &s.target - a * &s.input;
            let standard = b.norm_squared();
            let gain = svd.worst_case_perturbation(&b, eps)?.objective_gain;
            Ok(SampleRisk {
                standard,
                adversarial: standard + gain,
                cross: (&at * &b).norm(),
            })
        })
        .collect()
}

/// Monte Carlo SR, AR and gap with common random numbers, using the
/// problem's own budget.
pub fn risk_study<P: EstimationProblem + ?Sized>(
    problem: &P,
    a: &DMatrix<f64>,
    n_samples: usize,
    stream: &RngStream,
) -> Result<RiskStudy> {
    risk_study_with_epsilon(problem, a, problem.epsilon(), n_samples, stream)
}

pub fn risk_study_with_epsilon<P: EstimationProblem + ?Sized>(
    problem: &P,
    a: &DMatrix<f64>,
    eps: f64,
    n_samples: usize,
    stream: &RngStream,
) -> Result<RiskStudy> {
    check_samples(n_samples)?;
    let per = sample_risks(problem, a, eps, n_samples, stream)?;
    let column = |f: fn(&SampleRisk) -> f64| -> Vec<f64> { per.iter().map(f).collect() };
    let seed = stream.seed;
    let singular = linalg::singular_values_desc(a);
    let (lambda_min, lambda_max) = gram_extremes(&singular, a.nrows(), a.ncols());
    Ok(RiskStudy {
        sr: RiskEstimate::from_values(&column(|s| s.standard), seed),
        ar: RiskEstimate::from_values(&column(|s| s.adversarial), seed),
        gap: RiskEstimate::from_values(&column(SampleRisk::gap), seed),
        cross_term: RiskEstimate::from_values(&column(|s| s.cross), seed),
        lambda_min,
        lambda_max,
        epsilon: eps,
    })
}

fn check_samples(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidParameter("n_samples must be positive".into()))
    } else {
        Ok(())
    }
}

/// `(λ_min(AᵀA), λ_max(AᵀA))` from singular values; `λ_min = 0` when `p < n`.
fn gram_extremes(singular: &[f64], p: usize, n: usize) -> (f64, f64) {
    let max = singular.first().map_or(0.0, |s| s * s);
    let min = if p >= n && n > 0 { singular[n - 1].powi(2) } else { 0.0 };
    (min, max)
}

/// `tr(Σ_w) + tr((A − A⋆)Σ_x(A − A⋆)ᵀ)`.
pub fn standard_risk_closed(a: &DMatrix<f64>, problem: &LinearInverseProblem) -> Result<f64> {
    problem.standard_risk(a)
}

pub fn standard_risk_mc<P: EstimationProblem + ?Sized>(
    a: &DMatrix<f64>,
    problem: &P,
    n_samples: usize,
    stream: &RngStream,
) -> Result<RiskEstimate> {
    check_samples(n_samples)?;
    problem.check_shape(a)?;
    let values: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let s = problem.draw(stream, i);
            (&s.target - a * &s.input).norm_squared()
        })
        .collect();
    Ok(RiskEstimate::from_values(&values, stream.seed))
}

pub fn adversarial_risk_mc<P: EstimationProblem + ?Sized>(
    a: &DMatrix<f64>,
    problem: &P,
    n_samples: usize,
    stream: &RngStream,
) -> Result<RiskEstimate> {
    Ok(risk_study(problem, a, n_samples, stream)?.ar)
}

pub fn gap_bounds_mc<P: EstimationProblem + ?Sized>(
    a: &DMatrix<f64>,
    problem: &P,
    n_samples: usize,
    stream: &RngStream,
) -> Result<GapBounds> {
    Ok(risk_study(problem, a, n_samples, stream)?.bounds())
}

/// Closed-form bounds on `AR(A⋆) − SR(A⋆)` under `Σ_w = σ_w²I`.
pub fn astar_gap_bounds(problem: &LinearInverseProblem) -> Result<GapBounds> {
    let variance = problem
        .sigma_w()
        .isotropic_variance(ISOTROPY_TOL)
        .ok_or_else(|| Error::InvalidParameter("noise covariance is not a multiple of the identity".into()))?;
    let sigma_w = variance.sqrt();
    let a = problem.a_star();
    let (p, n) = a.shape();
    let singular = linalg::singular_values_desc(a);
    let (lambda_min, lambda_max) = gram_extremes(&singular, p, n);
    let trace_sqrt: f64 = singular.iter().sum();
    let frob_sq: f64 = singular.iter().map(|s| s * s).sum();
    let cross_lo = sigma_w * (2.0 / (std::f64::consts::PI * p as f64)).sqrt() * trace_sqrt;
    let cross_hi = sigma_w * frob_sq.sqrt();
    Ok(GapBounds::assemble(
        problem.epsilon(),
        cross_lo,
        cross_hi,
        0.0,
        lambda_min,
        lambda_max,
    ))
}
