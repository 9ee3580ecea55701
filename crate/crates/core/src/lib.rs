//! Worst-case ℓ²-bounded perturbations of linear models, adversarial-risk
//! estimation and bounds, robustness–accuracy frontiers, and adversarially
//! robust finite-horizon Kalman estimation.

pub mod error;
pub mod estimation;
pub mod kalman;
pub mod linalg;
pub mod model;
pub mod risk;
pub mod rng;
pub mod training;
pub mod trs;

pub use error::{Error, Result};
pub use estimation::{EstimationProblem, Sample, SecondMoments};
pub use model::{sample_batch, symmetric_sqrt, validate_covariance, CovarianceSpec, LinearInverseProblem, SampleBatch};
pub use risk::{
    adversarial_risk_mc, astar_gap_bounds, gap_bounds_mc, risk_study, standard_risk_closed, standard_risk_mc,
    GapBounds, RiskEstimate, RiskStudy,
};
pub use rng::RngStream;
pub use training::{adversarial_loss_grad, pareto_trace, train, Init, ParetoPoint, TrainConfig, Trainer};
pub use trs::{secular_root, svd_full, worst_case_perturbation, Branch, PerturbationResult, SvdFactorization};
