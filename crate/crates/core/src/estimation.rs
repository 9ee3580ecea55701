//! The common shape of every linear-Gaussian estimation problem in the crate.
//!
//! A linear estimator `A` maps an input vector to an estimate of a target
//! vector. For the linear inverse problem the input is `x` and the target is
//! `y = A⋆x + w`; for state estimation the input is the stacked measurement
//! vector `Y_N` and the target is the state `x_k`. Both are jointly Gaussian and
//! zero mean, so the standard risk is a quadratic in `A` determined by the
//! second moments below.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RngStream;

/// Second moments of a zero-mean (input, target) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondMoments {
    /// `E[input inputᵀ]`
    pub input_cov: DMatrix<f64>,
    /// `E[target inputᵀ]`
    pub cross: DMatrix<f64>,
    /// `E[target targetᵀ]`
    pub target_cov: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: DVector<f64>,
    pub target: DVector<f64>,
}

pub trait EstimationProblem: Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    /// ℓ² budget of the adversary acting on the input.
    fn epsilon(&self) -> f64;

    fn moments(&self) -> &SecondMoments;

    /// Draws sample `index` of `stream`. Must be a pure function of its arguments.
    fn draw(&self, stream: &RngStream, index: u64) -> Sample;

    fn check_shape(&self, a: &DMatrix<f64>) -> Result<()> {
        let expected = (self.output_dim(), self.input_dim());
        if a.shape() == expected {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "estimator is {}x{}, expected {}x{}",
                a.nrows(),
                a.ncols(),
                expected.0,
                expected.1
            )))
        }
    }

    /// `E‖target − A·input‖²` from the second moments.
    fn standard_risk(&self, a: &DMatrix<f64>) -> Result<f64> {
        self.check_shape(a)?;
        let m = self.moments();
        Ok(m.target_cov.trace() - 2.0 * (a * m.cross.transpose()).trace() + (a * &m.input_cov * a.transpose()).trace())
    }

    /// Gradient of the standard risk, `2(A·Σ_in − Σ_cross)`.
    fn standard_risk_grad(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let m = self.moments();
        (a * &m.input_cov - &m.cross) * 2.0
    }

    /// Minimizer of the standard risk, `Σ_cross Σ_in⁻¹`.
    fn nominal_estimator(&self) -> Result<DMatrix<f64>> {
        let m = self.moments();
        linalg::solve_right_spd(&m.cross, &m.input_cov)
    }
}
