use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, min_eigenvalue};

/// Quadratic running-cost weights ½(xᵀQ̄x + uᵀRu), with the lifted state
/// weight `Q = CᵀQ̄C`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostWeights {
    pub state: DMatrix<f64>,
    pub input: DMatrix<f64>,
    pub lifted: DMatrix<f64>,
    pub input_inv: DMatrix<f64>,
    pub lambda_min_state: f64,
    pub lambda_min_input: f64,
}

impl CostWeights {
    pub fn new(state: DMatrix<f64>, input: DMatrix<f64>, lifted_dim: usize) -> Result<Self> {
        for (name, m) in [("state weight", &state), ("input weight", &input)] {
            if !is_symmetric(m, 1e-12) {
                return Err(Error::InvalidArgument(format!("{name} must be symmetric")));
            }
        }
        let n = state.nrows();
        if lifted_dim < n {
            return Err(Error::Dimension(
                "lifted dimension smaller than state dimension".into(),
            ));
        }
        let lambda_min_state = min_eigenvalue(&state);
        let lambda_min_input = min_eigenvalue(&input);
        if !(lambda_min_state > 0.0) || !(lambda_min_input > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "weights must be positive definite (λmin = {lambda_min_state}, {lambda_min_input})"
            )));
        }
        let input_inv = input
            .clone()
            .try_inverse()
            .ok_or(Error::Singular("input weight"))?;
        let mut lifted = DMatrix::zeros(lifted_dim, lifted_dim);
        lifted.view_mut((0, 0), (n, n)).copy_from(&state);
        Ok(Self {
            state,
            input,
            lifted,
            input_inv,
            lambda_min_state,
            lambda_min_input,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.input.nrows()
    }

    pub fn state_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        0.5 * (x.dot(&(&self.state * x)) + u.dot(&(&self.input * u)))
    }

    pub fn lifted_cost(&self, z: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let x = z.rows(0, self.state_dim());
        0.5 * (x.dot(&(&self.state * x)) + u.dot(&(&self.input * u)))
    }
}
