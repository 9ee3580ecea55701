//! Exact worst-case ℓ² perturbation for a linear model.
//!
//! Solves
//!
//! ```text
//! maximize    δᵀAᵀAδ − 2δᵀAᵀb
//! subject to  ‖δ‖₂ ≤ ε
//! ```
//!
//! which is the inner maximization of `‖b − Aδ‖²` over the ε-ball once
//! `b = y − Ax` is fixed. The problem is a non-convex QCQP with strong
//! duality. With `A = UΣVᵀ` and `βᵢ = uᵢᵀb` the optimal multiplier
//! `λ* ≥ σ₁²` either solves the secular equation
//!
//! ```text
//! Σᵢ βᵢ²σᵢ² / (λ − σᵢ²)² = ε²
//! ```
//!
//! (easy case), or equals `σ₁²` when `b` has no weight on the top singular
//! space and the remaining terms cannot reach the boundary (hard case), in
//! which case a multiple of a top right singular vector is added to the
//! pseudo-inverse solution.
//!
//! The root is found for the shift `μ = λ − σ₁²`, with each gap
//! `σ₁² − σᵢ²` formed as `(σ₁ − σᵢ)(σ₁ + σᵢ)`, so that `λ* − σ₁²` keeps
//! full relative precision even when it is tiny compared to `σ₁²`.
//!
//! One [`SvdFactorization`] can be shared across threads and reused for any
//! number of right-hand sides `b`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, Error, Result};
use crate::linalg;

/// `σᵢ` joins the top cluster when `σ₁ − σᵢ ≤ CLUSTER_TOL·max(σ₁, 1)`.
pub const CLUSTER_TOL: f64 = 1e-9;
/// Hard branch requires the off-top sum to be below `ε²(1 − HARD_CASE_MARGIN)`.
pub const HARD_CASE_MARGIN: f64 = 1e-9;
/// Top-space weight treated as zero when the implied `λ* − σ₁²` would fall
/// below `HARD_CASE_SHIFT·σ₁²`.
pub const HARD_CASE_SHIFT: f64 = 1e-10;
pub const SECULAR_RTOL: f64 = 1e-12;
pub const SECULAR_MAX_ITERS: usize = 200;

/// Full singular-value decomposition `A = U Σ Vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactorization {
    /// `p × p` orthogonal.
    pub u: DMatrix<f64>,
    /// `min(n, p)` values, nonincreasing.
    pub singular_values: DVector<f64>,
    /// `n × n` orthogonal.
    pub v: DMatrix<f64>,
}

/// Computes the full SVD with singular values sorted in nonincreasing order.
pub fn svd_full(a: &DMatrix<f64>) -> Result<SvdFactorization> {
    check_finite("matrix", a.as_slice())?;
    let (p, n) = a.shape();
    let r = p.min(n);
    if r == 0 {
        return Ok(SvdFactorization {
            u: DMatrix::identity(p, p),
            singular_values: DVector::zeros(0),
            v: DMatrix::identity(n, n),
        });
    }
    let svd = a.clone().svd(true, true);
    let (u_thin, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD did not return singular vectors".into())),
    };
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let singular_values = DVector::from_iterator(r, order.iter().map(|&i| svd.singular_values[i]));
    let u_sorted = DMatrix::from_fn(p, r, |row, c| u_thin[(row, order[c])]);
    let v_sorted = DMatrix::from_fn(n, r, |row, c| v_t[(order[c], row)]);
    Ok(SvdFactorization {
        u: complete_basis(&u_sorted),
        singular_values,
        v: complete_basis(&v_sorted),
    })
}

/// Extends orthonormal columns `q` (`m × k`) to an `m × m` orthogonal matrix.
fn complete_basis(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, k) = q.shape();
    if k == m {
        return q.clone();
    }
    // Eigenvectors of the projector I − QQᵀ with eigenvalue 1 span the complement.
    let projector = DMatrix::identity(m, m) - q * q.transpose();
    let (_, vectors) = linalg::sym_eigen(&projector);
    let mut out = DMatrix::zeros(m, m);
    out.columns_mut(0, k).copy_from(q);
    // Ascending order: the last m − k eigenvalues are the unit ones.
    for c in k..m {
        let mut col = vectors.column(c).into_owned();
        for prev in 0..c {
            let proj = out.column(prev).dot(&col);
            col -= out.column(prev) * proj;
        }
        let norm = col.norm();
        out.set_column(c, &(col / norm));
    }
    out
}

impl SvdFactorization {
    pub fn p(&self) -> usize {
        self.u.nrows()
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.get(0).copied().unwrap_or(0.0)
    }

    /// `λ_min(AᵀA)`: `σ_n²` when `p ≥ n`, otherwise 0 (AᵀA is rank deficient).
    pub fn gram_lambda_min(&self) -> f64 {
        if self.p() >= self.n() {
            self.singular_values.as_slice().last().map(|s| s * s).unwrap_or(0.0)
        } else {
            0.0
        }
    }

    /// `λ_max(AᵀA) = σ₁²`.
    pub fn gram_lambda_max(&self) -> f64 {
        self.sigma_max().powi(2)
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(self.p(), self.n());
        for (i, v) in self.singular_values.iter().enumerate() {
            s[(i, i)] = *v;
        }
        &self.u * s * self.v.transpose()
    }

    /// Solves the inner maximization for right-hand side `b` and budget `eps`.
    pub fn worst_case_perturbation(&self, b: &DVector<f64>, eps: f64) -> Result<PerturbationResult> {
        if b.len() != self.p() {
            return Err(Error::Dimension(format!(
                "b has length {}, expected {}",
                b.len(),
                self.p()
            )));
        }
        check_finite("b", b.as_slice())?;
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps must be finite and >= 0, got {eps}"
            )));
        }
        let n = self.n();
        let sigma1 = self.sigma_max();
        if eps == 0.0 || sigma1 == 0.0 {
            return Ok(PerturbationResult {
                delta: DVector::zeros(n),
                dual_lambda: sigma1 * sigma1,
                objective_gain: 0.0,
                branch: Branch::Degenerate,
            });
        }

        let r = self.singular_values.len();
        let sv = &self.singular_values;
        let beta: Vec<f64> = (0..r).map(|i| self.u.column(i).dot(b)).collect();
        let weight: Vec<f64> = (0..r).map(|i| (beta[i] * sv[i]).powi(2)).collect();
        let gap: Vec<f64> = (0..r).map(|i| (sigma1 - sv[i]) * (sigma1 + sv[i])).collect();
        let cluster_cut = CLUSTER_TOL * sigma1.max(1.0);
        let in_top: Vec<bool> = (0..r).map(|i| sigma1 - sv[i] <= cluster_cut).collect();

        let eps2 = eps * eps;
        let top_weight: f64 = (0..r).filter(|&i| in_top[i]).map(|i| weight[i]).sum();
        let rest_sum: f64 = (0..r)
            .filter(|&i| !in_top[i] && weight[i] > 0.0)
            .map(|i| weight[i] / (gap[i] * gap[i]))
            .sum();

        let top_negligible = top_weight <= (eps2 - rest_sum).max(0.0) * (HARD_CASE_SHIFT * sigma1 * sigma1).powi(2);
        let hard = top_negligible && rest_sum < eps2 * (1.0 - HARD_CASE_MARGIN);

        let mut z = DVector::zeros(n);
        let (shift, branch) = if hard {
            for i in (0..r).filter(|&i| !in_top[i]) {
                z[i] = -sv[i] * beta[i] / gap[i];
            }
            let c = (eps2 - rest_sum).max(0.0).sqrt();
            // Any unit vector in the top space is optimal; the sign is taken so
            // that δᵀAᵀb ≤ 0, which is also the limit of the easy-case solution.
            z[0] = if beta[0] > 0.0 { -c } else { c };
            (0.0, Branch::Hard)
        } else {
            let active: Vec<usize> = (0..r)
                .filter(|&i| weight[i] > 0.0 && !(top_negligible && in_top[i]))
                .collect();
            let mu = if top_negligible && rest_sum <= eps2 {
                // Borderline: the off-top terms reach the boundary at λ = σ₁²
                // to within the hard-case margin.
                0.0
            } else {
                let terms: Vec<(f64, f64)> = active.iter().map(|&i| (weight[i], gap[i])).collect();
                secular_shift(&terms, eps)?
            };
            for &i in &active {
                z[i] = -sv[i] * beta[i] / (mu + gap[i]);
            }
            (mu, Branch::Easy)
        };

        let mut gain = 0.0;
        for i in 0..r {
            gain += sv[i] * sv[i] * z[i] * z[i] - 2.0 * sv[i] * z[i] * beta[i];
        }
        let delta = &self.v * z;
        Ok(PerturbationResult {
            delta,
            dual_lambda: sigma1 * sigma1 + shift,
            objective_gain: gain.max(0.0),
            branch,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `λ* > σ₁²`, unique maximizer from the secular equation.
    Easy,
    /// `λ* = σ₁²`, maximizer uses a top right singular vector.
    Hard,
    /// `A = 0` or `ε = 0`: `δ* = 0`.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationResult {
    pub delta: DVector<f64>,
    /// Optimal multiplier `λ* ≥ σ₁²`.
    pub dual_lambda: f64,
    /// `δ*ᵀAᵀAδ* − 2δ*ᵀAᵀb ≥ 0`, so that `‖b − Aδ*‖² = ‖b‖² + objective_gain`.
    pub objective_gain: f64,
    pub branch: Branch,
}

/// Worst-case perturbation of `b − Aδ` over `‖δ‖₂ ≤ eps`.
pub fn worst_case_perturbation(a: &DMatrix<f64>, b: &DVector<f64>, eps: f64) -> Result<PerturbationResult> {
    svd_full(a)?.worst_case_perturbation(b, eps)
}

/// Unique root `λ* > σ₁²` of `Σᵢ wᵢ/(λ − sᵢ)² = ε²`, where `sᵢ = σᵢ²` and
/// `σ₁² = max sᵢ`. Requires the left-hand side to exceed `ε²` as `λ → σ₁²⁺`.
pub fn secular_root(weights: &[f64], sigma_sq: &[f64], eps: f64) -> Result<f64> {
    if weights.len() != sigma_sq.len() {
        return Err(Error::Dimension(format!(
            "{} weights but {} squared singular values",
            weights.len(),
            sigma_sq.len()
        )));
    }
    check_finite("weights", weights)?;
    check_finite("sigma_sq", sigma_sq)?;
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
    }
    let top = sigma_sq.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let terms: Vec<(f64, f64)> = weights
        .iter()
        .zip(sigma_sq)
        .filter(|(w, _)| **w > 0.0)
        .map(|(&w, &s)| (w, top - s))
        .collect();
    Ok(top + secular_shift(&terms, eps)?)
}

/// Solves `Σ wᵢ/(μ + gᵢ)² = ε²` for `μ > 0` with all `gᵢ ≥ 0`, `wᵢ > 0`.
///
/// Newton iteration on `φ(μ) = f(μ)^{-1/2} − 1/ε`, which is increasing and
/// concave, safeguarded by bisection on a maintained bracket.
fn secular_shift(terms: &[(f64, f64)], eps: f64) -> Result<f64> {
    let total: f64 = terms.iter().map(|(w, _)| w).sum();
    if terms.is_empty() || total <= 0.0 {
        return Err(Error::Numerical("secular equation has no positive weights".into()));
    }
    let eps2 = eps * eps;
    let f = |mu: f64| -> f64 { terms.iter().map(|(w, g)| w / ((mu + g) * (mu + g))).sum() };
    let fprime = |mu: f64| -> f64 {
        terms
            .iter()
            .map(|(w, g)| -2.0 * w / ((mu + g) * (mu + g) * (mu + g)))
            .sum()
    };

    let mut lo = 0.0;
    // f(μ) ≤ total/μ² since every gap is nonnegative.
    let mut hi = total.sqrt() / eps;
    if f(lo) <= eps2 || f(hi) > eps2 * (1.0 + SECULAR_RTOL) {
        return Err(Error::Numerical(format!(
            "secular root not bracketed: f(0) = {:e}, f(hi) = {:e}, eps^2 = {:e}",
            f(lo),
            f(hi),
            eps2
        )));
    }

    let mut mu = hi;
    let mut best = (f64::INFINITY, hi);
    for _ in 0..SECULAR_MAX_ITERS {
        let fm = f(mu);
        let resid = (fm - eps2).abs();
        if resid < best.0 {
            best = (resid, mu);
        }
        if resid <= SECULAR_RTOL * eps2 {
            return Ok(mu);
        }
        if fm > eps2 {
            lo = mu;
        } else {
            hi = mu;
        }
        let phi = fm.powf(-0.5) - 1.0 / eps;
        let dphi = -0.5 * fm.powf(-1.5) * fprime(mu);
        let mut next = mu - phi / dphi;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if next == mu || hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        mu = next;
    }
    // Bracket collapsed to floating-point resolution.
    if best.0 <= 1e-8 * eps2 {
        Ok(best.1)
    } else {
        Err(Error::Numerical(format!(
            "secular iteration stalled with residual {:e}",
            best.0
        )))
    }
}
