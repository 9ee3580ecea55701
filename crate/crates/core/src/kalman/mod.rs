//! Finite-horizon state estimation for linear time-invariant systems
//!
//! ```text
//! x_{t+1} = A x_t + w_t,   y_t = C x_t + v_t,   t = 0, …, N
//! ```
//!
//! with `x_0 ~ N(0, Σ₀)`, `w_t ~ N(0, Σ_w)`, `v_t ~ N(0, Σ_v)`. Stacking the
//! measurements gives `Y_N = 𝒪_N x_0 + τ_N W_N + V_N` and
//! `x_k = A^k x_0 + Γ_k W_N`, so estimating `x_k` from `Y_N` with a linear map
//! `L` is a linear inverse problem; [`StateEstimation`] exposes it through
//! [`EstimationProblem`] so the risk and training code apply unchanged.

mod bounds;

pub use bounds::{
    bound_report, gap_lower_bounds, gap_upper_bound_general, kalman_bound_report, kalman_gap_lower_bound,
    kalman_gap_lower_bound_using, kalman_gap_upper_bound, kalman_gap_upper_bound_using, r_factor, state_noise_matrix,
    EstimatorBoundReport, Formula, Regime,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, Error, Result};
use crate::estimation::{EstimationProblem, Sample, SecondMoments};
use crate::linalg;
use crate::model::CovarianceSpec;
use crate::risk::{risk_study, RiskEstimate, RiskStudy};
use crate::rng::{standard_normals, RngStream};

/// Tolerance for the isotropic / scaled-orthogonal structure checks.
pub const ASSUMPTION_TOL: f64 = 1e-9;
/// Relative singular-value cutoff for the observability rank test.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    sigma0: CovarianceSpec,
    sigma_w: CovarianceSpec,
    sigma_v: CovarianceSpec,
    horizon: usize,
    chol0: DMatrix<f64>,
    chol_w: DMatrix<f64>,
    chol_v: DMatrix<f64>,
}

/// `Σ₀ = σ₀²I`, `Σ_w = σ_w²I`, `Σ_v = σ_v²I` and `A = ρQ` with `Q` orthogonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Isotropy {
    pub rho: f64,
    pub sigma0_sq: f64,
    pub sigma_w_sq: f64,
    pub sigma_v_sq: f64,
}

impl LtiSystem {
    pub fn new(
        a: DMatrix<f64>,
        c: DMatrix<f64>,
        sigma0: CovarianceSpec,
        sigma_w: CovarianceSpec,
        sigma_v: CovarianceSpec,
        horizon: usize,
    ) -> Result<Self> {
        check_finite("dynamics matrix", a.as_slice())?;
        check_finite("measurement matrix", c.as_slice())?;
        let n = a.nrows();
        if !a.is_square() || c.ncols() != n || sigma0.dim() != n || sigma_w.dim() != n || sigma_v.dim() != c.nrows() {
            return Err(Error::Dimension(format!(
                "A {}x{}, C {}x{}, Σ₀ {}, Σ_w {}, Σ_v {}",
                a.nrows(),
                a.ncols(),
                c.nrows(),
                c.ncols(),
                sigma0.dim(),
                sigma_w.dim(),
                sigma_v.dim()
            )));
        }
        for (name, s) in [("initial", &sigma0), ("process", &sigma_w), ("sensor", &sigma_v)] {
            if !s.is_strict() {
                return Err(Error::InvalidParameter(format!(
                    "{name} covariance must be positive definite"
                )));
            }
        }
        Ok(Self {
            chol0: sigma0.cholesky()?,
            chol_w: sigma_w.cholesky()?,
            chol_v: sigma_v.cholesky()?,
            a,
            c,
            sigma0,
            sigma_w,
            sigma_v,
            horizon,
        })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn sigma0(&self) -> &CovarianceSpec {
        &self.sigma0
    }

    pub fn sigma_w(&self) -> &CovarianceSpec {
        &self.sigma_w
    }

    pub fn sigma_v(&self) -> &CovarianceSpec {
        &self.sigma_v
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Measurement dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn with_horizon(&self, horizon: usize) -> Self {
        Self {
            horizon,
            ..self.clone()
        }
    }

    pub fn isotropy(&self) -> Option<Isotropy> {
        let n = self.n();
        let ata = self.a.transpose() * &self.a;
        let rho_sq = ata.trace() / n as f64;
        let dev = (&ata - DMatrix::identity(n, n) * rho_sq).amax();
        if dev > ASSUMPTION_TOL * rho_sq.max(1.0) {
            return None;
        }
        Some(Isotropy {
            rho: rho_sq.sqrt(),
            sigma0_sq: self.sigma0.isotropic_variance(ASSUMPTION_TOL)?,
            sigma_w_sq: self.sigma_w.isotropic_variance(ASSUMPTION_TOL)?,
            sigma_v_sq: self.sigma_v.isotropic_variance(ASSUMPTION_TOL)?,
        })
    }

    /// `blockdiag(Σ₀, I_N ⊗ Σ_w)`.
    pub fn sigma_bar(&self) -> DMatrix<f64> {
        let w = linalg::kron_identity(self.horizon, self.sigma_w.matrix());
        linalg::block_diag(&[self.sigma0.matrix(), &w])
    }

    fn check_index(&self, k: usize) -> Result<()> {
        if k > self.horizon {
            Err(Error::InvalidParameter(format!(
                "k = {k} exceeds horizon N = {}",
                self.horizon
            )))
        } else {
            Ok(())
        }
    }

    fn check_estimator(&self, l: &DMatrix<f64>) -> Result<()> {
        let expected = (self.n(), self.p() * (self.horizon + 1));
        if l.shape() != expected {
            return Err(Error::Dimension(format!(
                "estimator is {}x{}, expected {}x{}",
                l.nrows(),
                l.ncols(),
                expected.0,
                expected.1
            )));
        }
        Ok(())
    }
}

/// Powers `A^0, …, A^m`.
fn powers(a: &DMatrix<f64>, m: usize) -> Vec<DMatrix<f64>> {
    let n = a.nrows();
    let mut out = Vec::with_capacity(m + 1);
    out.push(DMatrix::identity(n, n));
    for i in 1..=m {
        out.push(a * &out[i - 1]);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedModel {
    /// `𝒪_N`, `p(N+1) × n`.
    pub obs: DMatrix<f64>,
    /// `τ_N`, `p(N+1) × nN`, block `(i, j) = C A^{i−1−j}` for `j < i`.
    pub toeplitz: DMatrix<f64>,
    /// `Γ_k`, `n × nN`: `[A^{k−1} … A I 0 … 0]`.
    pub gamma_k: DMatrix<f64>,
    /// `A^k`.
    pub a_pow_k: DMatrix<f64>,
    pub k: usize,
}

pub fn build_stacked(system: &LtiSystem, k: usize) -> Result<StackedModel> {
    system.check_index(k)?;
    let (n, p, big_n) = (system.n(), system.p(), system.horizon);
    let pw = powers(&system.a, big_n);
    let mut obs = DMatrix::zeros(p * (big_n + 1), n);
    let mut toeplitz = DMatrix::zeros(p * (big_n + 1), n * big_n);
    let mut gamma_k = DMatrix::zeros(n, n * big_n);
    for i in 0..=big_n {
        obs.view_mut((i * p, 0), (p, n)).copy_from(&(&system.c * &pw[i]));
        for j in 0..i {
            toeplitz
                .view_mut((i * p, j * n), (p, n))
                .copy_from(&(&system.c * &pw[i - 1 - j]));
        }
    }
    for j in 0..k {
        gamma_k.view_mut((0, j * n), (n, n)).copy_from(&pw[k - 1 - j]);
    }
    Ok(StackedModel {
        obs,
        toeplitz,
        gamma_k,
        a_pow_k: pw[k].clone(),
        k,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramianSummary {
    /// `W_o = 𝒪ᵀ𝒪`.
    pub gramian: DMatrix<f64>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub frobenius: f64,
    /// `σ_min(𝒪) = λ_min(W_o)^{1/2}`.
    pub sqrt_lambda_min: f64,
}

/// `W_o(n_steps)` of the pair `(A, C)`.
pub fn observability_gramian(system: &LtiSystem, n_steps: usize) -> GramianSummary {
    let pw = powers(&system.a, n_steps);
    let n = system.n();
    let mut gramian = DMatrix::zeros(n, n);
    for ak in &pw {
        let row = &system.c * ak;
        gramian += row.transpose() * row;
    }
    let gramian = linalg::symmetrize(&gramian);
    let (lambda_min, lambda_max) = linalg::eig_extremes(&gramian);
    GramianSummary {
        frobenius: gramian.norm(),
        sqrt_lambda_min: lambda_min.max(0.0).sqrt(),
        lambda_min,
        lambda_max,
        gramian,
    }
}

/// `rank(𝒪_{n−1}) = n`.
pub fn is_observable(system: &LtiSystem) -> bool {
    let n = system.n();
    let pw = powers(&system.a, n.saturating_sub(1));
    let p = system.p();
    let mut obs = DMatrix::zeros(p * pw.len(), n);
    for (i, ak) in pw.iter().enumerate() {
        obs.view_mut((i * p, 0), (p, n)).copy_from(&(&system.c * ak));
    }
    let s = linalg::singular_values_desc(&obs);
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > RANK_TOL * top).count() == n,
        _ => false,
    }
}

/// Second moments of `(Y_N, x_k)`.
fn moments(system: &LtiSystem, st: &StackedModel) -> SecondMoments {
    let big_n = system.horizon;
    let s0 = system.sigma0.matrix();
    let iw = linalg::kron_identity(big_n, system.sigma_w.matrix());
    let iv = linalg::kron_identity(big_n + 1, system.sigma_v.matrix());
    let input_cov = &st.obs * s0 * st.obs.transpose() + &st.toeplitz * &iw * st.toeplitz.transpose() + iv;
    let cross = &st.a_pow_k * s0 * st.obs.transpose() + &st.gamma_k * &iw * st.toeplitz.transpose();
    let target_cov = &st.a_pow_k * s0 * st.a_pow_k.transpose() + &st.gamma_k * &iw * st.gamma_k.transpose();
    SecondMoments {
        input_cov: linalg::symmetrize(&input_cov),
        cross,
        target_cov: linalg::symmetrize(&target_cov),
    }
}

/// `L̂_k = (A^kΣ₀𝒪ᵀ + Γ_k(I⊗Σ_w)τᵀ)(𝒪Σ₀𝒪ᵀ + τ(I⊗Σ_w)τᵀ + I⊗Σ_v)⁻¹`.
pub fn kalman_estimator(system: &LtiSystem, k: usize) -> Result<DMatrix<f64>> {
    let st = build_stacked(system, k)?;
    let m = moments(system, &st);
    linalg::solve_right_spd(&m.cross, &m.input_cov)
}

/// The isotropic form `(σ₀²A^k𝒪ᵀ + σ_w²Γ_kτᵀ)(σ₀²𝒪𝒪ᵀ + σ_w²ττᵀ + σ_v²I)⁻¹`.
pub fn kalman_estimator_simplified(system: &LtiSystem, k: usize) -> Result<DMatrix<f64>> {
    let iso = system
        .isotropy()
        .ok_or_else(|| Error::InvalidParameter("system does not have isotropic covariances".into()))?;
    let st = build_stacked(system, k)?;
    let dim = st.obs.nrows();
    let cross =
        &st.a_pow_k * st.obs.transpose() * iso.sigma0_sq + &st.gamma_k * st.toeplitz.transpose() * iso.sigma_w_sq;
    let inc = &st.obs * st.obs.transpose() * iso.sigma0_sq
        + &st.toeplitz * st.toeplitz.transpose() * iso.sigma_w_sq
        + DMatrix::identity(dim, dim) * iso.sigma_v_sq;
    linalg::solve_right_spd(&cross, &inc)
}

/// Filtered means `x̂_t⁺`, `t = 0, …, N`, from the covariance recursion.
pub fn recursive_kf(system: &LtiSystem, measurements: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    if measurements.len() != system.horizon + 1 {
        return Err(Error::Dimension(format!(
            "expected {} measurements, got {}",
            system.horizon + 1,
            measurements.len()
        )));
    }
    let n = system.n();
    let (a, c) = (&system.a, &system.c);
    let mut x = DVector::zeros(n);
    let mut p = system.sigma0.matrix().clone();
    let mut out = Vec::with_capacity(measurements.len());
    for (t, y) in measurements.iter().enumerate() {
        if y.len() != system.p() {
            return Err(Error::Dimension(format!("measurement {t} has length {}", y.len())));
        }
        let innovation_cov = c * &p * c.transpose() + system.sigma_v.matrix();
        let gain = linalg::solve_right_spd(&(&p * c.transpose()), &innovation_cov)
            .map_err(|_| Error::Numerical(format!("innovation covariance not invertible at step {t}")))?;
        x = &x + &gain * (y - c * &x);
        // Joseph form keeps P symmetric PSD.
        let ikc = DMatrix::identity(n, n) - &gain * c;
        p = linalg::symmetrize(&(&ikc * &p * ikc.transpose() + &gain * system.sigma_v.matrix() * gain.transpose()));
        out.push(x.clone());
        x = a * &x;
        p = linalg::symmetrize(&(a * &p * a.transpose() + system.sigma_w.matrix()));
    }
    Ok(out)
}

/// One simulated trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `x_0, …, x_N`
    pub states: Vec<DVector<f64>>,
    /// `y_0, …, y_N`
    pub measurements: Vec<DVector<f64>>,
    /// `w_0, …, w_{N−1}`
    pub process_noise: Vec<DVector<f64>>,
    /// `v_0, …, v_N`
    pub sensor_noise: Vec<DVector<f64>>,
}

fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        parts.iter().map(|v| v.len()).sum(),
        parts.iter().flat_map(|v| v.iter().copied()),
    )
}

impl Rollout {
    /// `Y_N`.
    pub fn stacked_measurements(&self) -> DVector<f64> {
        stack(&self.measurements)
    }

    /// `W_N`.
    pub fn stacked_process_noise(&self) -> DVector<f64> {
        stack(&self.process_noise)
    }
}

/// Step-by-step simulation from sub-stream `index`: `x_0`, then `w_0..w_{N−1}`,
/// then `v_0..v_N`.
pub fn simulate_rollout(system: &LtiSystem, stream: &RngStream, index: u64) -> Rollout {
    let mut rng = stream.substream(index);
    let (n, p, big_n) = (system.n(), system.p(), system.horizon);
    let x0 = &system.chol0 * standard_normals(&mut rng, n);
    let process_noise: Vec<_> = (0..big_n)
        .map(|_| &system.chol_w * standard_normals(&mut rng, n))
        .collect();
    let sensor_noise: Vec<_> = (0..=big_n)
        .map(|_| &system.chol_v * standard_normals(&mut rng, p))
        .collect();
    let mut states = Vec::with_capacity(big_n + 1);
    states.push(x0);
    for w in &process_noise {
        let next = &system.a * states.last().unwrap() + w;
        states.push(next);
    }
    let measurements = states
        .iter()
        .zip(&sensor_noise)
        .map(|(x, v)| &system.c * x + v)
        .collect();
    Rollout {
        states,
        measurements,
        process_noise,
        sensor_noise,
    }
}

/// `Cov(x_k − L·Y_N) = SΣ₀Sᵀ + T(I⊗Σ_w)Tᵀ + L(I⊗Σ_v)Lᵀ`, `S = A^k − L𝒪`, `T = Γ_k − Lτ`.
pub fn residual_covariance(l: &DMatrix<f64>, system: &LtiSystem, k: usize) -> Result<CovarianceSpec> {
    system.check_estimator(l)?;
    let st = build_stacked(system, k)?;
    let s = &st.a_pow_k - l * &st.obs;
    let t = &st.gamma_k - l * &st.toeplitz;
    let iw = linalg::kron_identity(system.horizon, system.sigma_w.matrix());
    let iv = linalg::kron_identity(system.horizon + 1, system.sigma_v.matrix());
    let cov = &s * system.sigma0.matrix() * s.transpose() + &t * iw * t.transpose() + l * iv * l.transpose();
    CovarianceSpec::new(linalg::symmetrize(&cov), false)
}

/// `‖(A^k − L𝒪)Σ₀^{1/2}‖_F² + ‖(Γ_k − Lτ)(I⊗Σ_w)^{1/2}‖_F² + ‖L(I⊗Σ_v)^{1/2}‖_F²`.
pub fn estimator_sr_closed(l: &DMatrix<f64>, system: &LtiSystem, k: usize) -> Result<f64> {
    Ok(residual_covariance(l, system, k)?.trace())
}

/// Estimating `x_k` from `Y_N` as an [`EstimationProblem`]: the estimator `L`
/// plays the role of `A`, `Y_N` of the input and `x_k` of the target.
#[derive(Debug, Clone)]
pub struct StateEstimation {
    system: LtiSystem,
    k: usize,
    epsilon: f64,
    stacked: StackedModel,
    moments: SecondMoments,
}

impl StateEstimation {
    pub fn system(&self) -> &LtiSystem {
        &self.system
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn stacked(&self) -> &StackedModel {
        &self.stacked
    }
}

pub fn as_estimation_problem(system: &LtiSystem, k: usize, epsilon: f64) -> Result<StateEstimation> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    let stacked = build_stacked(system, k)?;
    let moments = moments(system, &stacked);
    Ok(StateEstimation {
        system: system.clone(),
        k,
        epsilon,
        stacked,
        moments,
    })
}

impl EstimationProblem for StateEstimation {
    fn input_dim(&self) -> usize {
        self.system.p() * (self.system.horizon + 1)
    }

    fn output_dim(&self) -> usize {
        self.system.n()
    }

    fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn moments(&self) -> &SecondMoments {
        &self.moments
    }

    fn draw(&self, stream: &RngStream, index: u64) -> Sample {
        let r = simulate_rollout(&self.system, stream, index);
        Sample {
            input: r.stacked_measurements(),
            target: r.states[self.k].clone(),
        }
    }
}

/// Monte Carlo SR, AR and gap of `l` on simulated rollouts.
pub fn estimator_risk_study(
    l: &DMatrix<f64>,
    system: &LtiSystem,
    k: usize,
    epsilon: f64,
    n_samples: usize,
    stream: &RngStream,
) -> Result<RiskStudy> {
    risk_study(&as_estimation_problem(system, k, epsilon)?, l, n_samples, stream)
}

pub fn estimator_ar_mc(
    l: &DMatrix<f64>,
    system: &LtiSystem,
    k: usize,
    epsilon: f64,
    n_samples: usize,
    stream: &RngStream,
) -> Result<RiskEstimate> {
    Ok(estimator_risk_study(l, system, k, epsilon, n_samples, stream)?.ar)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iso(dim: usize, v: f64) -> CovarianceSpec {
        CovarianceSpec::isotropic(dim, v).unwrap()
    }

    pub(super) fn rotation(alpha: f64) -> LtiSystem {
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

    #[test]
    fn identity_system_stacks() {
        let sys = LtiSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            iso(2, 1.0),
            iso(2, 1.0),
            iso(2, 1.0),
            1,
        )
        .unwrap();
        let st = build_stacked(&sys, 1).unwrap();
        let i = DMatrix::<f64>::identity(2, 2);
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_eq!(
            st.obs,
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0])
        );
        assert_eq!(st.toeplitz.rows(0, 2), z);
        assert_eq!(st.toeplitz.rows(2, 2), i);
        assert_eq!(st.gamma_k, i);
    }

    #[test]
    fn gamma_zero_at_start() {
        let st = build_stacked(&rotation(0.95), 0).unwrap();
        assert_eq!(st.gamma_k.shape(), (2, 10));
        assert!(st.gamma_k.iter().all(|&v| v == 0.0));
        assert!(build_stacked(&rotation(0.95), 6).is_err());
    }

    #[test]
    fn identity_gramian() {
        let sys = LtiSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            iso(2, 1.0),
            iso(2, 1.0),
            iso(2, 1.0),
            4,
        )
        .unwrap();
        let g = observability_gramian(&sys, 4);
        assert!((g.gramian - DMatrix::identity(2, 2) * 5.0).amax() < 1e-14);
        assert!(is_observable(&sys));
    }

    #[test]
    fn blind_sensor_is_unobservable() {
        let sys = LtiSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(1, 2),
            iso(2, 1.0),
            iso(2, 1.0),
            iso(1, 1.0),
            3,
        )
        .unwrap();
        assert!(!is_observable(&sys));
        assert_eq!(observability_gramian(&sys, 3).gramian, DMatrix::zeros(2, 2));
    }

    #[test]
    fn single_measurement_is_bayes_estimator() {
        let s0 = CovarianceSpec::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]), true).unwrap();
        let c = DMatrix::from_row_slice(1, 2, &[1.0, -0.5]);
        let sys = LtiSystem::new(
            DMatrix::identity(2, 2) * 0.7,
            c.clone(),
            s0.clone(),
            iso(2, 0.2),
            iso(1, 0.4),
            0,
        )
        .unwrap();
        let l = kalman_estimator(&sys, 0).unwrap();
        let inn = &c * s0.matrix() * c.transpose() + DMatrix::from_element(1, 1, 0.4);
        let expected = s0.matrix() * c.transpose() / inn[(0, 0)];
        assert!((l - expected).amax() < 1e-14);
    }

    #[test]
    fn simplified_form_agrees() {
        for k in [0, 3, 5] {
            let sys = rotation(0.98);
            let d = kalman_estimator(&sys, k).unwrap() - kalman_estimator_simplified(&sys, k).unwrap();
            assert!(d.amax() < 1e-10);
        }
    }

    #[test]
    fn zero_estimator_residual_is_prior() {
        let sys = rotation(0.95);
        let l = DMatrix::zeros(2, 6);
        let cov = residual_covariance(&l, &sys, 0).unwrap();
        assert!((cov.matrix() - DMatrix::<f64>::identity(2, 2)).amax() < 1e-15);
        let st = build_stacked(&sys, 4).unwrap();
        let iw = linalg::kron_identity(5, sys.sigma_w().matrix());
        let expected =
            (&st.a_pow_k * st.a_pow_k.transpose()).trace() + (&st.gamma_k * iw * st.gamma_k.transpose()).trace();
        assert!((estimator_sr_closed(&l, &sys, 4).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn no_data_gives_zero_estimates() {
        let sys = rotation(0.95);
        let ys = vec![DVector::zeros(1); 6];
        assert!(recursive_kf(&sys, &ys).unwrap().iter().all(|x| x.norm() == 0.0));
        assert!(recursive_kf(&sys, &ys[..3]).is_err());
    }

    #[test]
    fn near_exact_observation() {
        let sys = LtiSystem::new(
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            iso(2, 1.0),
            iso(2, 1.0),
            iso(2, 1e-12),
            0,
        )
        .unwrap();
        let y = DVector::from_vec(vec![0.3, -1.2]);
        let est = recursive_kf(&sys, std::slice::from_ref(&y)).unwrap();
        assert!((&est[0] - y).norm() < 1e-10);
    }

    #[test]
    fn rejects_singular_covariances_and_bad_shapes() {
        let singular = CovarianceSpec::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), false).unwrap();
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        assert!(LtiSystem::new(
            DMatrix::identity(2, 2),
            c.clone(),
            singular,
            iso(2, 1.0),
            iso(1, 1.0),
            2
        )
        .is_err());
        assert!(LtiSystem::new(DMatrix::identity(2, 2), c, iso(2, 1.0), iso(2, 1.0), iso(2, 1.0), 2).is_err());
        let sys = rotation(0.95);
        assert!(estimator_sr_closed(&DMatrix::zeros(2, 5), &sys, 0).is_err());
    }

    #[test]
    fn isotropy_detection() {
        let iso_sys = rotation(0.95).isotropy().unwrap();
        assert!((iso_sys.rho - 1.0).abs() < 1e-12);
        let shear = LtiSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            iso(2, 1.0),
            iso(2, 0.1),
            iso(1, 0.1),
            5,
        )
        .unwrap();
        assert!(shear.isotropy().is_none());
    }
}
