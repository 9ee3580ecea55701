//! Problem definitions and Gaussian sampling.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, Error, Result};
use crate::estimation::{EstimationProblem, Sample, SecondMoments};
use crate::linalg;
use crate::rng::{standard_normals, RngStream};

/// Absolute tolerance for both the symmetry check and negative eigenvalues.
pub const PSD_TOL: f64 = 1e-10;

/// A validated symmetric PSD matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    matrix: DMatrix<f64>,
    lambda_min: f64,
    lambda_max: f64,
    strict: bool,
}

/// Validates `m` as a covariance: square, finite, symmetric within [`PSD_TOL`],
/// eigenvalues `≥ -PSD_TOL`, and `λ_min > 0` when `strict` is set.
/// The stored matrix is the symmetrized `(m + mᵀ)/2`.
pub fn validate_covariance(m: &DMatrix<f64>, strict: bool) -> Result<CovarianceSpec> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "covariance must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    check_finite("covariance", m.as_slice())?;
    let asym = linalg::max_asymmetry(m);
    if asym > PSD_TOL {
        return Err(Error::NotSymmetric(asym));
    }
    let matrix = linalg::symmetrize(m);
    let (lambda_min, lambda_max) = linalg::eig_extremes(&matrix);
    if lambda_min < -PSD_TOL {
        return Err(Error::NotPsd(lambda_min));
    }
    if strict && lambda_min <= 0.0 {
        return Err(Error::NotPositiveDefinite(lambda_min));
    }
    Ok(CovarianceSpec {
        matrix,
        lambda_min,
        lambda_max,
        strict,
    })
}

/// Symmetric square root `M` with `M·M = Σ`.
pub fn symmetric_sqrt(s: &CovarianceSpec) -> DMatrix<f64> {
    linalg::psd_sqrt(&s.matrix)
}

impl CovarianceSpec {
    pub fn new(m: DMatrix<f64>, strict: bool) -> Result<Self> {
        validate_covariance(&m, strict)
    }

    /// `σ²·I_dim`.
    pub fn isotropic(dim: usize, variance: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dim, dim) * variance, variance > 0.0)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn sqrt(&self) -> DMatrix<f64> {
        symmetric_sqrt(self)
    }

    pub fn cholesky(&self) -> Result<DMatrix<f64>> {
        linalg::cholesky_lower(&self.matrix)
    }

    /// `Some(σ²)` when the matrix equals `σ²·I` within `tol` (absolute, entrywise).
    pub fn isotropic_variance(&self, tol: f64) -> Option<f64> {
        let d = self.dim();
        if d == 0 {
            return None;
        }
        let v = self.matrix.trace() / d as f64;
        let dev = (&self.matrix - DMatrix::identity(d, d) * v).amax();
        (dev <= tol).then_some(v)
    }
}

/// `y = A⋆x + w` with `x ~ N(0, Σ_x)`, `w ~ N(0, Σ_w)` and an ℓ² budget `ε`.
#[derive(Debug, Clone)]
pub struct LinearInverseProblem {
    a_star: DMatrix<f64>,
    sigma_x: CovarianceSpec,
    sigma_w: CovarianceSpec,
    epsilon: f64,
    chol_x: DMatrix<f64>,
    chol_w: DMatrix<f64>,
    moments: SecondMoments,
}

impl LinearInverseProblem {
    pub fn new(a_star: DMatrix<f64>, sigma_x: CovarianceSpec, sigma_w: CovarianceSpec, epsilon: f64) -> Result<Self> {
        check_finite("a_star", a_star.as_slice())?;
        let (p, n) = a_star.shape();
        if sigma_x.dim() != n || sigma_w.dim() != p {
            return Err(Error::Dimension(format!(
                "A⋆ is {p}x{n} but Σ_x is {d}x{d} and Σ_w is {e}x{e}",
                d = sigma_x.dim(),
                e = sigma_w.dim()
            )));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        let chol_x = sigma_x.cholesky()?;
        let chol_w = sigma_w.cholesky()?;
        let cross = &a_star * sigma_x.matrix();
        let target_cov = linalg::symmetrize(&(&cross * a_star.transpose() + sigma_w.matrix()));
        let moments = SecondMoments {
            input_cov: sigma_x.matrix().clone(),
            cross,
            target_cov,
        };
        Ok(Self {
            a_star,
            sigma_x,
            sigma_w,
            epsilon,
            chol_x,
            chol_w,
            moments,
        })
    }

    pub fn a_star(&self) -> &DMatrix<f64> {
        &self.a_star
    }

    pub fn sigma_x(&self) -> &CovarianceSpec {
        &self.sigma_x
    }

    pub fn sigma_w(&self) -> &CovarianceSpec {
        &self.sigma_w
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Same model with a different adversarial budget.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.a_star.clone(), self.sigma_x.clone(), self.sigma_w.clone(), epsilon)
    }

    /// Number of measurements `p`.
    pub fn p(&self) -> usize {
        self.a_star.nrows()
    }

    /// Signal dimension `n`.
    pub fn n(&self) -> usize {
        self.a_star.ncols()
    }

    fn draw_one(&self, stream: &RngStream, index: u64) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let mut rng = stream.substream(index);
        let zx = standard_normals(&mut rng, self.n());
        let zw = standard_normals(&mut rng, self.p());
        let x = &self.chol_x * zx;
        let w = &self.chol_w * zw;
        let y = &self.a_star * &x + &w;
        (x, w, y)
    }
}

impl EstimationProblem for LinearInverseProblem {
    fn input_dim(&self) -> usize {
        self.n()
    }

    fn output_dim(&self) -> usize {
        self.p()
    }

    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn moments(&self) -> &SecondMoments {
        &self.moments
    }

    fn draw(&self, stream: &RngStream, index: u64) -> Sample {
        let (x, _, y) = self.draw_one(stream, index);
        Sample { input: x, target: y }
    }

    /// `tr(Σ_w) + tr((A − A⋆)Σ_x(A − A⋆)ᵀ)`.
    fn standard_risk(&self, a: &DMatrix<f64>) -> Result<f64> {
        if a.shape() != self.a_star.shape() {
            return Err(Error::Dimension(format!(
                "model is {}x{}, expected {}x{}",
                a.nrows(),
                a.ncols(),
                self.p(),
                self.n()
            )));
        }
        let d = a - &self.a_star;
        Ok(self.sigma_w.trace() + (&d * self.sigma_x.matrix() * d.transpose()).trace())
    }

    fn nominal_estimator(&self) -> Result<DMatrix<f64>> {
        Ok(self.a_star.clone())
    }
}

/// Draws `x_i`, `w_i` and `y_i = A⋆x_i + w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub xs: Vec<DVector<f64>>,
    pub ws: Vec<DVector<f64>>,
    pub ys: Vec<DVector<f64>>,
    pub seed: u64,
    pub base_index: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Sample `i` uses sub-stream `base_index + i`; `x` takes the first `n`
/// standard normals of that sub-stream and `w` the next `p`.
pub fn sample_batch(problem: &LinearInverseProblem, count: usize, stream: &RngStream, base_index: u64) -> SampleBatch {
    let mut batch = SampleBatch {
        xs: Vec::with_capacity(count),
        ws: Vec::with_capacity(count),
        ys: Vec::with_capacity(count),
        seed: stream.seed,
        base_index,
    };
    for i in 0..count as u64 {
        let (x, w, y) = problem.draw_one(stream, base_index + i);
        batch.xs.push(x);
        batch.ws.push(w);
        batch.ys.push(y);
    }
    batch
}
