use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::data::DataBatch;
use crate::identify::model::ErrorBound;
use crate::linalg::{is_symmetric, min_eigenvalue, sym_inv_sqrt, sym_sqrt, symmetrize};
use crate::serde_matrix;

/// Energy bound `D Dᵀ ⪯ Δ Δᵀ` on the lifted noise and the induced
/// coefficient `c_d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseEnvelope {
    #[serde(with = "serde_matrix::rows")]
    pub factor: DMatrix<f64>,
    pub c_d: f64,
    pub zmax: f64,
    pub energy_sqrt_frobenius: f64,
    pub gram_inv_sqrt_frobenius: f64,
}

impl NoiseEnvelope {
    pub fn energy(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }
}

/// `Δ = √T · a · L_p · I_N`: every lifted noise column `J(x_j) d̄_j` has norm
/// at most `L_p a` when `‖d̄‖ ≤ a`, so `D Dᵀ ⪯ T (L_p a)² I`.
pub fn jacobian_noise_factor(
    samples: usize,
    noise_bound: f64,
    lipschitz: f64,
    lifted_dim: usize,
) -> DMatrix<f64> {
    DMatrix::identity(lifted_dim, lifted_dim) * ((samples as f64).sqrt() * noise_bound * lipschitz)
}

/// `c_d = ‖(ΔΔᵀ)^{1/2}‖_F · ‖(W0W0ᵀ)^{-1/2}‖_F`.
pub fn noise_coefficient(
    batch: &DataBatch,
    factor: &DMatrix<f64>,
    zmax: f64,
) -> Result<NoiseEnvelope> {
    if factor.nrows() != batch.lifted_dim() {
        return Err(Error::Dimension(format!(
            "noise factor has {} rows, lifted dimension is {}",
            factor.nrows(),
            batch.lifted_dim()
        )));
    }
    let energy = factor * factor.transpose();
    let mut env = noise_coefficient_from_energy(batch, &energy, zmax)?;
    env.factor = factor.clone();
    Ok(env)
}

/// As [`noise_coefficient`] but from the energy matrix `ΔΔᵀ` directly.
pub fn noise_coefficient_from_energy(
    batch: &DataBatch,
    energy: &DMatrix<f64>,
    zmax: f64,
) -> Result<NoiseEnvelope> {
    if !is_symmetric(energy, 1e-10 * energy.amax().max(1.0)) {
        return Err(Error::InvalidArgument(
            "noise energy bound must be symmetric".into(),
        ));
    }
    let energy_sqrt = sym_sqrt(energy)?;
    let gram_inv_sqrt = sym_inv_sqrt(&batch.gram())?;
    let energy_sqrt_frobenius = energy_sqrt.norm();
    let gram_inv_sqrt_frobenius = gram_inv_sqrt.norm();
    Ok(NoiseEnvelope {
        factor: energy_sqrt,
        c_d: energy_sqrt_frobenius * gram_inv_sqrt_frobenius,
        zmax,
        energy_sqrt_frobenius,
        gram_inv_sqrt_frobenius,
    })
}

/// Ellipsoidal set of stacked coefficients `Z̃` (K×N, the transpose of
/// `[A B0 B1 …]`) consistent with the data and noise bound:
/// `(Z̃ − ζ)ᵀ 𝐀 (Z̃ − ζ) ⪯ 𝐐`.
#[derive(Clone, Debug)]
pub struct ConsistencySet {
    pub gram: DMatrix<f64>,
    pub center: DMatrix<f64>,
    pub energy: DMatrix<f64>,
    gram_inv_sqrt: DMatrix<f64>,
    energy_sqrt: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub slack: f64,
}

impl ConsistencySet {
    pub fn new(batch: &DataBatch, env: &NoiseEnvelope) -> Result<Self> {
        let gram = batch.gram();
        let chol = gram
            .clone()
            .cholesky()
            .ok_or(Error::Singular("regressor Gram matrix"))?;
        let center = chol.solve(&(&batch.regressor * batch.derivatives.transpose()));
        let energy = env.energy();
        Ok(Self {
            gram_inv_sqrt: sym_inv_sqrt(&gram)?,
            energy_sqrt: sym_sqrt(&energy)?,
            gram,
            center,
            energy,
        })
    }

    /// Minimum eigenvalue of `𝐐 − (Z̃−ζ)ᵀ𝐀(Z̃−ζ)`; membership means it is at
    /// least `−tol`.
    pub fn membership(&self, candidate: &DMatrix<f64>, tol: f64) -> Result<Membership> {
        if candidate.shape() != self.center.shape() {
            return Err(Error::Dimension(
                "candidate shape differs from the consistency set".into(),
            ));
        }
        let diff = candidate - &self.center;
        let gap = symmetrize(&(&self.energy - diff.transpose() * &self.gram * &diff));
        let slack = min_eigenvalue(&gap);
        Ok(Membership {
            member: slack >= -tol,
            slack,
        })
    }

    /// `ζ + 𝐀^{-1/2} γ 𝐐^{1/2}`; a member whenever `‖γ‖₂ ≤ 1`.
    pub fn member_from_unit(&self, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if gamma.shape() != self.center.shape() {
            return Err(Error::Dimension(
                "γ shape differs from the consistency set".into(),
            ));
        }
        Ok(&self.center + &self.gram_inv_sqrt * gamma * &self.energy_sqrt)
    }

    /// Stacked model perturbation `[ΔA ΔB0 ΔB1 …] = 𝐐^{1/2} γᵀ 𝐀^{-1/2}`.
    pub fn perturbation_from_unit(&self, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        &self.energy_sqrt * gamma.transpose() * &self.gram_inv_sqrt
    }
}

pub fn consistency_membership(
    candidate: &DMatrix<f64>,
    batch: &DataBatch,
    env: &NoiseEnvelope,
    tol: f64,
) -> Result<Membership> {
    ConsistencySet::new(batch, env)?.membership(candidate, tol)
}

/// `c1 ← c1 + c_d(1 + zmax)`, `c2 ← c2 + c_d`.
pub fn fold_noise_into_bound(eb: &ErrorBound, env: &NoiseEnvelope) -> Result<ErrorBound> {
    eb.with_coefficients(eb.c1 + env.c_d * (1.0 + env.zmax), eb.c2 + env.c_d)
}
