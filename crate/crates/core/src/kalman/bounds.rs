//! Lower and upper bounds on `AR(L) − SR(L)` for state estimators.
//!
//! The Kalman-specific bounds come in two forms. The simplified form assumes
//! isotropic covariances and `A = ρQ`; the general form is built from `Σ̄`,
//! `Σ_v` and the state-noise matrix
//! `X_k = A^kΣ₀A^kᵀ + Σ_{i=1}^k A^{k−i}Σ_w A^{k−i}ᵀ`. Both forms coincide when
//! the simplified assumptions hold.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::{kalman_estimator, observability_gramian, residual_covariance, LtiSystem};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `λ_min(W_o)^{1/2}·σ_min(Σ̄) ≥ σ_min(Σ_v)^{1/2}`: the refined upper bound applies.
    HighObservability,
    LowObservability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formula {
    Simplified,
    General,
}

/// `2√(2/π)·ε/√n`.
fn lower_prefactor(eps: f64, n: usize) -> f64 {
    2.0 * (2.0 / PI).sqrt() * eps / (n as f64).sqrt()
}

/// `Σ_{j=0}^{k−1} ρ^{2j}`; equals `k` at `ρ = 1`.
pub fn r_factor(rho: f64, k: usize) -> f64 {
    let r2 = rho * rho;
    let mut term = 1.0;
    let mut sum = 0.0;
    for _ in 0..k {
        sum += term;
        term *= r2;
    }
    sum
}

/// `A^kΣ₀A^kᵀ + Σ_{i=1}^k A^{k−i}Σ_w A^{k−i}ᵀ`, the covariance of `x_k`.
pub fn state_noise_matrix(system: &LtiSystem, k: usize) -> DMatrix<f64> {
    let a = system.a();
    let mut x = system.sigma0.matrix().clone();
    for _ in 0..k {
        x = a * x * a.transpose() + system.sigma_w.matrix();
    }
    linalg::symmetrize(&x)
}

/// `(general, frobenius)` lower bounds for an arbitrary estimator:
/// `c·tr((LᵀΣL)^{1/2})` and `c·σ_min(Σ_v)^{1/2}‖L‖_F²`, `c = 2√(2/π)ε/√n`,
/// with `Σ = Cov(x_k − L·Y_N)`.
pub fn gap_lower_bounds(l: &DMatrix<f64>, system: &LtiSystem, k: usize, eps: f64) -> Result<(f64, f64)> {
    let cov = residual_covariance(l, system, k)?;
    let c = lower_prefactor(eps, system.n());
    // LᵀΣL and Σ^{1/2}LLᵀΣ^{1/2} share their nonzero spectrum; the latter is n×n.
    let root = cov.sqrt();
    let inner = &root * l * l.transpose() * &root;
    let general = c * linalg::trace_sqrt(&inner);
    let frobenius = c * system.sigma_v.lambda_min().sqrt() * l.norm_squared();
    Ok((general, frobenius))
}

/// `2ε‖L‖₂‖Σ^{1/2}‖_F + ε²‖L‖₂²` with `‖Σ^{1/2}‖_F = √tr(Σ)`.
pub fn gap_upper_bound_general(l: &DMatrix<f64>, system: &LtiSystem, k: usize, eps: f64) -> Result<f64> {
    let cov = residual_covariance(l, system, k)?;
    let norm = linalg::spectral_norm(l);
    Ok(2.0 * eps * norm * cov.trace().max(0.0).sqrt() + eps * eps * norm * norm)
}

fn pick_formula(system: &LtiSystem) -> Formula {
    if system.isotropy().is_some() {
        Formula::Simplified
    } else {
        Formula::General
    }
}

/// Extremes of `Σ̄ = blockdiag(Σ₀, I_N ⊗ Σ_w)`.
fn sigma_bar_extremes(system: &LtiSystem) -> (f64, f64) {
    let (mut lo, mut hi) = (system.sigma0.lambda_min(), system.sigma0.lambda_max());
    if system.horizon() > 0 {
        lo = lo.min(system.sigma_w.lambda_min());
        hi = hi.max(system.sigma_w.lambda_max());
    }
    (lo, hi)
}

/// Lower bound on the gap of the Kalman estimator `L̂_k`, using the simplified
/// form when its assumptions hold.
pub fn kalman_gap_lower_bound(system: &LtiSystem, k: usize, eps: f64) -> Result<f64> {
    kalman_gap_lower_bound_using(system, k, eps, pick_formula(system))
}

/// Simplified:
/// `c·σ_v‖C‖_F²·((ρ^{2k}σ₀² + r_k(ρ)σ_w²) / ((N+1)σ∨²‖W_o(N)‖_F + σ_v²))²`.
/// General: `σ_v → σ_min(Σ_v)^{1/2}`, numerator `λ_min(X_k)`,
/// `σ∨² → ‖Σ̄‖₂`, `σ_v² → ‖Σ_v‖₂`.
pub fn kalman_gap_lower_bound_using(system: &LtiSystem, k: usize, eps: f64, formula: Formula) -> Result<f64> {
    system.check_index(k)?;
    let n_plus = (system.horizon() + 1) as f64;
    let wo = observability_gramian(system, system.horizon());
    let c_frob_sq = system.c().norm_squared();
    let pre = lower_prefactor(eps, system.n());
    let value = match formula {
        Formula::Simplified => {
            let iso = system.isotropy().ok_or_else(|| {
                Error::InvalidParameter("simplified bound needs isotropic covariances and A = ρQ".into())
            })?;
            let vee = if system.horizon() > 0 {
                iso.sigma0_sq.max(iso.sigma_w_sq)
            } else {
                iso.sigma0_sq
            };
            let num = iso.rho.powi(2 * k as i32) * iso.sigma0_sq + r_factor(iso.rho, k) * iso.sigma_w_sq;
            let den = n_plus * vee * wo.frobenius + iso.sigma_v_sq;
            pre * iso.sigma_v_sq.sqrt() * c_frob_sq * (num / den).powi(2)
        }
        Formula::General => {
            let num = linalg::eig_extremes(&state_noise_matrix(system, k)).0.max(0.0);
            let den = n_plus * sigma_bar_extremes(system).1 * wo.frobenius + system.sigma_v.lambda_max();
            pre * system.sigma_v.lambda_min().sqrt() * c_frob_sq * (num / den).powi(2)
        }
    };
    Ok(value)
}

/// Upper bound on the gap of `L̂_k` and the regime that produced it.
pub fn kalman_gap_upper_bound(system: &LtiSystem, k: usize, eps: f64) -> Result<(f64, Regime)> {
    kalman_gap_upper_bound_using(system, k, eps, pick_formula(system))
}

/// `ε‖X_k‖₂·g·(2√n(‖Σ̄‖₂ + ‖Σ_v‖₂g²)^{1/2} + εg)` with
/// `ℓ = λ_min(W_o(N))^{1/2}σ_min(Σ̄)` and `g = ℓ/(ℓ² + σ_min(Σ_v))` when
/// `ℓ ≥ σ_min(Σ_v)^{1/2}`, else `g = 1/ℓ`. The simplified form reads the
/// same quantities off `(ρ, σ₀², σ_w², σ_v²)`.
pub fn kalman_gap_upper_bound_using(system: &LtiSystem, k: usize, eps: f64, formula: Formula) -> Result<(f64, Regime)> {
    system.check_index(k)?;
    let wo = observability_gramian(system, system.horizon());
    let (x_norm, bar_min, bar_max, v_min, v_max) = match formula {
        Formula::Simplified => {
            let iso = system.isotropy().ok_or_else(|| {
                Error::InvalidParameter("simplified bound needs isotropic covariances and A = ρQ".into())
            })?;
            let (wedge, vee) = if system.horizon() > 0 {
                (iso.sigma0_sq.min(iso.sigma_w_sq), iso.sigma0_sq.max(iso.sigma_w_sq))
            } else {
                (iso.sigma0_sq, iso.sigma0_sq)
            };
            let x = iso.rho.powi(2 * k as i32) * iso.sigma0_sq + r_factor(iso.rho, k) * iso.sigma_w_sq;
            (x, wedge, vee, iso.sigma_v_sq, iso.sigma_v_sq)
        }
        Formula::General => {
            let (lo, hi) = sigma_bar_extremes(system);
            let x = linalg::eig_extremes(&state_noise_matrix(system, k)).1;
            (x, lo, hi, system.sigma_v.lambda_min(), system.sigma_v.lambda_max())
        }
    };
    let ell = wo.sqrt_lambda_min * bar_min;
    let regime = if ell >= v_min.sqrt() {
        Regime::HighObservability
    } else {
        Regime::LowObservability
    };
    if eps == 0.0 {
        return Ok((0.0, regime));
    }
    let g = match regime {
        Regime::HighObservability => ell / (ell * ell + v_min),
        Regime::LowObservability => 1.0 / ell,
    };
    let n = system.n() as f64;
    let value = eps * x_norm * g * (2.0 * n.sqrt() * (bar_max + v_max * g * g).sqrt() + eps * g);
    Ok((value, regime))
}

/// All gap bounds for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorBoundReport {
    pub gap_lower_general: f64,
    pub gap_lower_frobenius: f64,
    /// Present when the estimator is the Kalman estimator.
    pub kalman_gap_lower: Option<f64>,
    pub gap_upper_general: f64,
    pub kalman_gap_upper: Option<f64>,
    pub regime: Regime,
    /// Which form the Kalman bounds used.
    pub formula: Formula,
}

/// Bounds that hold for any estimator `l`.
pub fn bound_report(l: &DMatrix<f64>, system: &LtiSystem, k: usize, eps: f64) -> Result<EstimatorBoundReport> {
    let (gap_lower_general, gap_lower_frobenius) = gap_lower_bounds(l, system, k, eps)?;
    let formula = pick_formula(system);
    Ok(EstimatorBoundReport {
        gap_lower_general,
        gap_lower_frobenius,
        kalman_gap_lower: None,
        gap_upper_general: gap_upper_bound_general(l, system, k, eps)?,
        kalman_gap_upper: None,
        regime: kalman_gap_upper_bound_using(system, k, eps, formula)?.1,
        formula,
    })
}

/// Bounds for the Kalman estimator `L̂_k`, including the Kalman-specific ones.
pub fn kalman_bound_report(system: &LtiSystem, k: usize, eps: f64) -> Result<EstimatorBoundReport> {
    let l = kalman_estimator(system, k)?;
    let mut report = bound_report(&l, system, k, eps)?;
    report.kalman_gap_lower = Some(kalman_gap_lower_bound_using(system, k, eps, report.formula)?);
    report.kalman_gap_upper = Some(kalman_gap_upper_bound_using(system, k, eps, report.formula)?.0);
    Ok(report)
}
