//! JSON experiment configuration. Every field has a default, so `{}` is a
//! valid file; unknown keys are rejected.

use advlin::kalman::LtiSystem;
use advlin::{CovarianceSpec, Init, LinearInverseProblem, RngStream, TrainConfig};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};
use crate::matrices::generate_conditioned_matrix;

/// Stream used to draw `A⋆` when it is not given explicitly.
pub const MATRIX_STREAM: u64 = 0x6d61_7472_6978_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Perturb,
    Risk,
    Bounds,
    Pareto,
    KalmanBounds,
    FigCondition,
    FigObservability,
    FigKfVsAdv,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Perturb => "perturb",
            Self::Risk => "risk",
            Self::Bounds => "bounds",
            Self::Pareto => "pareto",
            Self::KalmanBounds => "kalman-bounds",
            Self::FigCondition => "fig-condition",
            Self::FigObservability => "fig-observability",
            Self::FigKfVsAdv => "fig-kf-vs-adv",
        }
    }
}

/// Which estimation problem the `pareto` kind traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParetoTarget {
    #[default]
    Inverse,
    State,
}

/// A covariance given either as a variance (`σ²I`) or as a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovValue {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl CovValue {
    pub fn to_spec(&self, dim: usize, name: &str) -> CliResult<CovarianceSpec> {
        let spec = match self {
            Self::Scalar(v) => CovarianceSpec::isotropic(dim, *v),
            Self::Matrix(rows) => {
                let m = matrix_from_rows(rows, name)?;
                if m.shape() != (dim, dim) {
                    return Err(CliError::Config(format!(
                        "{name} is {}x{}, expected {dim}x{dim}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                CovarianceSpec::new(m, false)
            }
        };
        spec.map_err(|e| CliError::Config(format!("{name}: {e}")))
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>], name: &str) -> CliResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Config(format!(
            "{name} must be a nonempty rectangular list of rows"
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn rows_from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// Size of the generated square `A⋆` when `a_star` is absent.
    pub n: usize,
    pub condition: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_star: Option<Vec<Vec<f64>>>,
    /// Model evaluated by `risk` and `bounds`; defaults to `A⋆`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Vec<Vec<f64>>>,
    pub sigma_x: CovValue,
    pub sigma_w: CovValue,
    pub epsilon: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            n: 4,
            condition: 1.0,
            a_star: None,
            estimator: None,
            sigma_x: CovValue::Scalar(1.0),
            sigma_w: CovValue::Scalar(0.1),
            epsilon: 0.5,
        }
    }
}

impl ProblemConfig {
    pub fn a_star(&self, seed: u64) -> CliResult<DMatrix<f64>> {
        match &self.a_star {
            Some(rows) => matrix_from_rows(rows, "problem.a_star"),
            None => Ok(generate_conditioned_matrix(
                self.n,
                self.condition,
                &RngStream::new(seed, MATRIX_STREAM),
            )),
        }
    }

    pub fn build_with(&self, a_star: DMatrix<f64>) -> CliResult<LinearInverseProblem> {
        let (p, n) = a_star.shape();
        let sx = self.sigma_x.to_spec(n, "problem.sigma_x")?;
        let sw = self.sigma_w.to_spec(p, "problem.sigma_w")?;
        LinearInverseProblem::new(a_star, sx, sw, self.epsilon).map_err(|e| CliError::Config(format!("problem: {e}")))
    }

    pub fn build(&self, seed: u64) -> CliResult<LinearInverseProblem> {
        self.build_with(self.a_star(seed)?)
    }

    pub fn estimator(&self, problem: &LinearInverseProblem) -> CliResult<DMatrix<f64>> {
        let a = match &self.estimator {
            Some(rows) => matrix_from_rows(rows, "problem.estimator")?,
            None => return Ok(problem.a_star().clone()),
        };
        if a.shape() != problem.a_star().shape() {
            return Err(CliError::Config("problem.estimator must have the shape of A⋆".into()));
        }
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    /// Defaults to the problem's `A⋆`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    /// Defaults to one residual `y − A x` drawn from the problem.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
}

impl PerturbConfig {
    pub fn b(&self) -> Option<DVector<f64>> {
        self.b.as_ref().map(|b| DVector::from_column_slice(b))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub sigma0: CovValue,
    pub sigma_w: CovValue,
    pub sigma_v: CovValue,
    pub horizon: usize,
    /// Index of the estimated state.
    pub k: usize,
    pub epsilon: f64,
}

pub fn rotation_matrix(alpha: f64) -> Vec<Vec<f64>> {
    let beta = (1.0 - alpha * alpha).max(0.0).sqrt();
    vec![vec![alpha, beta], vec![-beta, alpha]]
}

impl SystemConfig {
    pub fn rotation(alpha: f64) -> Self {
        Self {
            a: rotation_matrix(alpha),
            ..Self::default()
        }
    }

    pub fn with_dynamics(&self, a: Vec<Vec<f64>>, k: usize) -> Self {
        Self { a, k, ..self.clone() }
    }

    pub fn build(&self) -> CliResult<LtiSystem> {
        let a = matrix_from_rows(&self.a, "system.a")?;
        let c = matrix_from_rows(&self.c, "system.c")?;
        let (n, p) = (a.nrows(), c.nrows());
        if self.k > self.horizon {
            return Err(CliError::Config(format!(
                "system.k = {} exceeds horizon {}",
                self.k, self.horizon
            )));
        }
        LtiSystem::new(
            a,
            c,
            self.sigma0.to_spec(n, "system.sigma0")?,
            self.sigma_w.to_spec(n, "system.sigma_w")?,
            self.sigma_v.to_spec(p, "system.sigma_v")?,
            self.horizon,
        )
        .map_err(|e| CliError::Config(format!("system: {e}")))
    }
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            a: rotation_matrix(0.95),
            c: vec![vec![1.0, 0.0]],
            sigma0: CovValue::Scalar(1.0),
            sigma_w: CovValue::Scalar(0.1),
            sigma_v: CovValue::Scalar(0.1),
            horizon: 5,
            k: 5,
            epsilon: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub n_iters: usize,
    /// Defaults to an inverse curvature bound of the loss.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_c0: Option<f64>,
    pub step_decay: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            n_iters: 5000,
            step_c0: None,
            step_decay: 0.5,
        }
    }
}

impl TrainingConfig {
    pub fn train_config(&self, lambda: f64, epsilon: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            n_iters: self.n_iters,
            step_c0: self.step_c0,
            step_decay: self.step_decay,
            init: Init::Nominal,
            ..TrainConfig::new(lambda, epsilon, seed)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FigureConfig {
    pub conditions: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Estimated state indices for the observability frontiers.
    pub observability_ks: Vec<usize>,
    pub rho_min: f64,
    pub rho_max: f64,
    pub rho_count: usize,
    /// Estimated state index for the nominal vs robust comparison.
    pub kf_k: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            conditions: vec![1.0, 3.0, 10.0],
            alphas: vec![0.95, 0.98, 0.99],
            observability_ks: vec![0, 5],
            rho_min: 0.1,
            rho_max: 10f64.sqrt(),
            rho_count: 12,
            kf_k: 0,
        }
    }
}

impl FigureConfig {
    /// Log-spaced sweep from `rho_min` to `rho_max`.
    pub fn rhos(&self) -> Vec<f64> {
        log_space(self.rho_min, self.rho_max, self.rho_count)
    }
}

pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| {
                    if i == 0 {
                        lo
                    } else if i == count - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// 15 log-spaced weights in `[1e-3, 1e2]` plus 0 and ∞.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend(log_space(1e-3, 1e2, 15));
    grid.push(f64::INFINITY);
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub n_samples: usize,
    /// `"inf"` encodes λ = ∞ (pure adversarial training).
    #[serde(with = "lambda_list")]
    pub lambda_grid: Vec<f64>,
    /// Budgets swept by `risk` and `bounds`; empty means `[problem.epsilon]`.
    pub epsilon_grid: Vec<f64>,
    pub pareto_target: ParetoTarget,
    pub output_path: String,
    pub problem: ProblemConfig,
    pub perturb: PerturbConfig,
    /// Systems for `kalman-bounds`; the first one also serves `pareto` with
    /// the state target and provides noise, horizon and budget for the
    /// figure sweeps.
    pub systems: Vec<SystemConfig>,
    pub training: TrainingConfig,
    pub figures: FigureConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Pareto,
            seed: 0,
            n_samples: advlin::risk::DEFAULT_SAMPLES,
            lambda_grid: default_lambda_grid(),
            epsilon_grid: vec![],
            pareto_target: ParetoTarget::Inverse,
            output_path: "results.csv".into(),
            problem: ProblemConfig::default(),
            perturb: PerturbConfig::default(),
            systems: [0.95, 0.98, 0.99].into_iter().map(SystemConfig::rotation).collect(),
            training: TrainingConfig::default(),
            figures: FigureConfig::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| bad(format!("cannot parse config: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form, hex encoded. `output_path` is left
    /// out so the same experiment hashes the same wherever it is written.
    pub fn hash(&self) -> String {
        let content = Self {
            output_path: String::new(),
            ..self.clone()
        };
        let compact = serde_json::to_string(&content).expect("config serializes");
        Sha256::digest(compact.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn epsilons(&self) -> Vec<f64> {
        if self.epsilon_grid.is_empty() {
            vec![self.problem.epsilon]
        } else {
            self.epsilon_grid.clone()
        }
    }

    pub fn base_system(&self) -> CliResult<&SystemConfig> {
        self.systems.first().ok_or_else(|| bad("systems must not be empty"))
    }

    pub fn validate(&self) -> CliResult<()> {
        let budget = |x: f64| x >= 0.0 && x.is_finite();
        if self.n_samples < 2 {
            return Err(bad("n_samples must be at least 2"));
        }
        if self.lambda_grid.is_empty() {
            return Err(bad("lambda_grid must not be empty"));
        }
        if self.lambda_grid.iter().any(|l| l.is_nan() || *l < 0.0) {
            return Err(bad("lambda_grid entries must be >= 0"));
        }
        if self.lambda_grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("lambda_grid must be nondecreasing"));
        }
        if !self.epsilon_grid.iter().copied().all(budget) || !budget(self.problem.epsilon) {
            return Err(bad("budgets must be finite and >= 0"));
        }
        if self.output_path.is_empty() {
            return Err(bad("output_path must not be empty"));
        }
        if self.problem.n == 0 || !(self.problem.condition >= 1.0 && self.problem.condition.is_finite()) {
            return Err(bad("problem.n must be positive and problem.condition finite and >= 1"));
        }
        for s in &self.systems {
            if !budget(s.epsilon) {
                return Err(bad("system.epsilon must be finite and >= 0"));
            }
        }
        let t = &self.training;
        if t.batch_size == 0 || t.n_iters == 0 {
            return Err(bad("training.batch_size and training.n_iters must be positive"));
        }
        if !(0.5..=1.0).contains(&t.step_decay) {
            return Err(bad("training.step_decay must lie in [0.5, 1]"));
        }
        if t.step_c0.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(bad("training.step_c0 must be positive"));
        }
        let f = &self.figures;
        if f.conditions.iter().any(|c| !(*c >= 1.0 && c.is_finite())) {
            return Err(bad("figures.conditions must be finite and >= 1"));
        }
        if f.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(bad("figures.alphas must lie in (0, 1]"));
        }
        if !(f.rho_min > 0.0 && f.rho_max >= f.rho_min && f.rho_max.is_finite()) || f.rho_count == 0 {
            return Err(bad(
                "figures.rho_min/rho_max/rho_count describe an empty or invalid sweep",
            ));
        }
        Ok(())
    }
}

mod lambda_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(grid: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = grid
            .iter()
            .map(|&l| {
                if l == f64::INFINITY {
                    Entry::Text("inf".into())
                } else {
                    Entry::Number(l)
                }
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Entry>::deserialize(d)?
            .into_iter()
            .map(|e| match e {
                Entry::Number(x) => Ok(x),
                Entry::Text(t) if matches!(t.as_str(), "inf" | "infinity" | "∞") => Ok(f64::INFINITY),
                Entry::Text(t) => Err(serde::de::Error::custom(format!("invalid lambda {t:?}"))),
            })
            .collect()
    }
}
