use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::serde_matrix;

/// Lifted bilinear dynamics `ż = A z + B0 u + Σ u_i B_i z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BilinearModel {
    #[serde(rename = "N")]
    pub lifted_dim: usize,
    pub m: usize,
    #[serde(rename = "A", with = "serde_matrix::rows")]
    pub drift: DMatrix<f64>,
    #[serde(rename = "B0", with = "serde_matrix::rows")]
    pub input: DMatrix<f64>,
    #[serde(rename = "B", with = "serde_matrix::rows_list")]
    pub bilinear: Vec<DMatrix<f64>>,
    pub dict_ref: String,
}

impl BilinearModel {
    pub fn new(
        drift: DMatrix<f64>,
        input: DMatrix<f64>,
        bilinear: Vec<DMatrix<f64>>,
        dict_ref: impl Into<String>,
    ) -> Result<Self> {
        let model = Self {
            lifted_dim: drift.nrows(),
            m: input.ncols(),
            drift,
            input,
            bilinear,
            dict_ref: dict_ref.into(),
        };
        model.validate()?;
        Ok(model)
    }

    /// Linear model without bilinear terms.
    pub fn linear(
        drift: DMatrix<f64>,
        input: DMatrix<f64>,
        dict_ref: impl Into<String>,
    ) -> Result<Self> {
        let n = drift.nrows();
        let m = input.ncols();
        Self::new(drift, input, vec![DMatrix::zeros(n, n); m], dict_ref)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.lifted_dim;
        if self.drift.shape() != (n, n)
            || self.input.shape() != (n, self.m)
            || self.bilinear.len() != self.m
            || self.bilinear.iter().any(|b| b.shape() != (n, n))
        {
            return Err(Error::Dimension(
                "bilinear model blocks are inconsistent".into(),
            ));
        }
        ensure_finite(self.drift.as_slice(), "model A")?;
        ensure_finite(self.input.as_slice(), "model B0")?;
        for b in &self.bilinear {
            ensure_finite(b.as_slice(), "model B_i")?;
        }
        Ok(())
    }

    /// Input map `B(z) = B0 + Σ_i B_i z e_iᵀ`.
    pub fn input_map(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut b = self.input.clone();
        for (i, bi) in self.bilinear.iter().enumerate() {
            let col = bi * z;
            let mut target = b.column_mut(i);
            target += col;
        }
        b
    }

    pub fn vector_field(&self, z: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.drift * z + self.input_map(z) * u
    }

    /// Stacked coefficient matrix `[A B0 B1 … Bm]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let n = self.lifted_dim;
        let cols = n + self.m + self.m * n;
        let mut out = DMatrix::zeros(n, cols);
        out.view_mut((0, 0), (n, n)).copy_from(&self.drift);
        out.view_mut((0, n), (n, self.m)).copy_from(&self.input);
        for (i, b) in self.bilinear.iter().enumerate() {
            out.view_mut((0, n + self.m + i * n), (n, n)).copy_from(b);
        }
        out
    }

    pub fn from_stacked(
        stacked: &DMatrix<f64>,
        m: usize,
        dict_ref: impl Into<String>,
    ) -> Result<Self> {
        let n = stacked.nrows();
        if stacked.ncols() != n + m + m * n {
            return Err(Error::Dimension(format!(
                "stacked matrix has {} columns, expected {}",
                stacked.ncols(),
                n + m + m * n
            )));
        }
        let drift = stacked.columns(0, n).into_owned();
        let input = stacked.columns(n, m).into_owned();
        let bilinear = (0..m)
            .map(|i| stacked.columns(n + m + i * n, n).into_owned())
            .collect();
        Self::new(drift, input, bilinear, dict_ref)
    }
}

/// Proportional model-error bound `‖r(z,u)‖ ≤ c1‖z‖ + c2‖u‖` and the
/// derived deviation constant `C12`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub c1: f64,
    pub c2: f64,
    pub c12: f64,
    pub lipschitz: f64,
    pub lambda_min_state: f64,
    pub lambda_min_input: f64,
}

impl ErrorBound {
    pub fn new(
        c1: f64,
        c2: f64,
        lipschitz: f64,
        lambda_min_state: f64,
        lambda_min_input: f64,
    ) -> Result<Self> {
        if !(c1 >= 0.0 && c2 >= 0.0 && lipschitz >= 0.0) || !c1.is_finite() || !c2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "error-bound coefficients must be finite and nonnegative (c1 = {c1}, c2 = {c2}, L = {lipschitz})"
            )));
        }
        if !(lambda_min_state > 0.0 && lambda_min_input > 0.0) {
            return Err(Error::InvalidArgument(
                "weight eigenvalues must be positive".into(),
            ));
        }
        Ok(Self {
            c1,
            c2,
            c12: deviation_constant(c1, c2, lipschitz, lambda_min_state, lambda_min_input),
            lipschitz,
            lambda_min_state,
            lambda_min_input,
        })
    }

    pub fn zero() -> Self {
        Self {
            c1: 0.0,
            c2: 0.0,
            c12: 0.0,
            lipschitz: 0.0,
            lambda_min_state: 1.0,
            lambda_min_input: 1.0,
        }
    }

    pub fn with_coefficients(&self, c1: f64, c2: f64) -> Result<Self> {
        Self::new(
            c1,
            c2,
            self.lipschitz,
            self.lambda_min_state,
            self.lambda_min_input,
        )
    }

    pub fn bound(&self, z_norm: f64, u_norm: f64) -> f64 {
        self.c1 * z_norm + self.c2 * u_norm
    }

    pub fn is_consistent(&self) -> bool {
        self.c12
            == deviation_constant(
                self.c1,
                self.c2,
                self.lipschitz,
                self.lambda_min_state,
                self.lambda_min_input,
            )
    }
}

fn deviation_constant(c1: f64, c2: f64, lipschitz: f64, lq: f64, lr: f64) -> f64 {
    (2.0 * c1 * lipschitz / lq.sqrt()).max(2.0 * c2 / lr.sqrt())
}
