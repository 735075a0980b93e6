use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::identify::model::BilinearModel;
use crate::lifting::Dictionary;
use crate::linalg::least_squares;
use crate::simulate::Sample;

pub const DEFAULT_RANK_TOL: f64 = 1e-8;
pub const CONDITION_WARNING: f64 = 1e8;

/// Snapshot matrices for the bilinear least-squares problem. Columns are
/// samples; the regressor stacks `[Z0; U0; V0¹; …; V0ᵐ]` with
/// `V0ⁱ[:, j] = u_i(t_j) z(t_j)`.
#[derive(Clone, Debug)]
pub struct DataBatch {
    pub lifted: DMatrix<f64>,
    pub inputs: DMatrix<f64>,
    pub input_products: Vec<DMatrix<f64>>,
    pub derivatives: DMatrix<f64>,
    pub regressor: DMatrix<f64>,
    /// Singular values of the regressor, descending.
    pub singular_values: Vec<f64>,
    pub dict_ref: String,
}

impl DataBatch {
    pub fn samples(&self) -> usize {
        self.lifted.ncols()
    }

    pub fn lifted_dim(&self) -> usize {
        self.lifted.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn regressor_dim(&self) -> usize {
        self.regressor.nrows()
    }

    pub fn condition_number(&self) -> f64 {
        match (self.singular_values.first(), self.singular_values.last()) {
            (Some(max), Some(min)) if *min > 0.0 => max / min,
            _ => f64::INFINITY,
        }
    }

    /// `W0 W0ᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.regressor * self.regressor.transpose()
    }
}

pub fn build_data_matrices(
    samples: &[Sample],
    dict: &Dictionary,
    rank_tol: f64,
) -> Result<DataBatch> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    dict.validate()?;
    let t = samples.len();
    let n_lift = dict.lifted_dim();
    let m = first.u.len();
    let mut lifted = DMatrix::zeros(n_lift, t);
    let mut inputs = DMatrix::zeros(m, t);
    let mut derivatives = DMatrix::zeros(n_lift, t);
    for (j, s) in samples.iter().enumerate() {
        if s.u.len() != m || s.x.len() != dict.n || s.xdot.len() != dict.n {
            return Err(Error::Dimension(format!(
                "sample {j} has inconsistent dimensions"
            )));
        }
        lifted.set_column(j, &dict.lift(&s.x)?);
        inputs.set_column(j, &s.u);
        derivatives.set_column(j, &(dict.lift_jacobian(&s.x)? * &s.xdot));
    }
    let input_products: Vec<DMatrix<f64>> = (0..m)
        .map(|i| {
            let mut v = lifted.clone();
            for (j, mut col) in v.column_iter_mut().enumerate() {
                col *= inputs[(i, j)];
            }
            v
        })
        .collect();
    let k = n_lift + m + m * n_lift;
    let mut regressor = DMatrix::zeros(k, t);
    regressor.rows_mut(0, n_lift).copy_from(&lifted);
    regressor.rows_mut(n_lift, m).copy_from(&inputs);
    for (i, v) in input_products.iter().enumerate() {
        regressor
            .rows_mut(n_lift + m + i * n_lift, n_lift)
            .copy_from(v);
    }
    let singular_values: Vec<f64> = regressor.singular_values().iter().copied().collect();
    let sigma_max = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values
        .iter()
        .filter(|&&s| s > rank_tol * sigma_max && s > 0.0)
        .count();
    if rank < k {
        return Err(Error::RankDeficient {
            rank,
            required: k,
            singular_values,
        });
    }
    Ok(DataBatch {
        lifted,
        inputs,
        input_products,
        derivatives,
        regressor,
        singular_values,
        dict_ref: dict.fingerprint(),
    })
}

#[derive(Clone, Debug)]
pub struct EdmdFit {
    pub model: BilinearModel,
    /// `Z1 − [A B0 B1 … Bm] W0`.
    pub residual: DMatrix<f64>,
    pub condition_number: f64,
}

/// Least-squares fit `[A B0 B1 … Bm] = Z1 W0†` via QR of `W0ᵀ`.
pub fn edmd_fit(batch: &DataBatch) -> Result<EdmdFit> {
    let k = batch.regressor_dim();
    if batch.samples() < k {
        return Err(Error::RankDeficient {
            rank: batch.samples(),
            required: k,
            singular_values: batch.singular_values.clone(),
        });
    }
    let condition_number = batch.condition_number();
    if condition_number > CONDITION_WARNING {
        log::warn!(
            "regressor condition number {condition_number:.3e} exceeds {CONDITION_WARNING:e}"
        );
    }
    let (solution, _) =
        least_squares(&batch.regressor.transpose(), &batch.derivatives.transpose())?;
    let stacked = solution.transpose();
    let residual = &batch.derivatives - &stacked * &batch.regressor;
    let model = BilinearModel::from_stacked(&stacked, batch.input_dim(), batch.dict_ref.clone())?;
    Ok(EdmdFit {
        model,
        residual,
        condition_number,
    })
}

/// `W0† = W0ᵀ(W0W0ᵀ)⁻¹` through a Cholesky factorization of the Gram matrix.
pub fn pseudo_inverse(batch: &DataBatch) -> Result<DMatrix<f64>> {
    if batch.condition_number() > 1.0 / f64::EPSILON.sqrt() * 1e4 {
        return Err(Error::Singular("regressor Gram matrix"));
    }
    let chol = batch
        .gram()
        .cholesky()
        .ok_or(Error::Singular("regressor Gram matrix"))?;
    Ok(chol.solve(&batch.regressor).transpose())
}
