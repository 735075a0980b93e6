use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hjsolve::policy::Policy;
use crate::identify::{BilinearModel, DataBatch};
use crate::linalg::{care_newton_kleinman, least_squares};
use crate::simulate::CostWeights;

pub const CARE_TOL: f64 = 1e-12;
pub const CARE_MAX_ITER: usize = 100;

/// Linear time-invariant fit `Z1 ≈ A Z0 + B0 U0` ignoring bilinear terms.
pub fn fit_lti(batch: &DataBatch) -> Result<BilinearModel> {
    let n = batch.lifted_dim();
    let m = batch.input_dim();
    if batch.samples() < n + m {
        return Err(Error::RankDeficient {
            rank: batch.samples(),
            required: n + m,
            singular_values: batch.singular_values.clone(),
        });
    }
    let regressor = batch.regressor.rows(0, n + m).into_owned();
    let (solution, _) = least_squares(&regressor.transpose(), &batch.derivatives.transpose())?;
    let stacked = solution.transpose();
    BilinearModel::linear(
        stacked.columns(0, n).into_owned(),
        stacked.columns(n, m).into_owned(),
        batch.dict_ref.clone(),
    )
}

#[derive(Clone, Debug)]
pub struct LqrBaseline {
    pub model: BilinearModel,
    /// Stabilizing solution of the algebraic Riccati equation.
    pub riccati: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    pub iterations: usize,
}

impl LqrBaseline {
    /// `u = −K z`.
    pub fn policy(&self) -> Policy {
        Policy::linear_gain(self.gain.clone())
    }
}

/// LQR for the drift and constant input matrix of `model` (bilinear terms
/// dropped) with state weight `Q_z`.
pub fn lqr_for_model(model: &BilinearModel, weights: &CostWeights) -> Result<LqrBaseline> {
    let sol = care_newton_kleinman(
        &model.drift,
        &model.input,
        &weights.lifted,
        &weights.input,
        CARE_TOL,
        CARE_MAX_ITER,
    )?;
    Ok(LqrBaseline {
        model: BilinearModel::linear(
            model.drift.clone(),
            model.input.clone(),
            model.dict_ref.clone(),
        )?,
        riccati: sol.p,
        gain: sol.gain,
        iterations: sol.iterations,
    })
}

/// Fits an LTI model to the batch and designs the LQR controller for it.
pub fn lqr_lti_baseline(batch: &DataBatch, weights: &CostWeights) -> Result<LqrBaseline> {
    lqr_for_model(&fit_lti(batch)?, weights)
}
