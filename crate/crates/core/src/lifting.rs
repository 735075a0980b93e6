//! Monomial dictionary lifting `x ↦ z = Ψ(x)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::StateBox;
use crate::error::{ensure_finite, Error, Result};
use crate::fingerprint::sha256_hex;
use crate::linalg::spectral_norm;
use crate::monomial::{self, MultiIndex};

/// Default number of grid intervals per axis (101 points).
pub const DEFAULT_GRID_INTERVALS: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dictionary {
    pub n: usize,
    pub max_degree: u32,
    pub multi_indices: Vec<MultiIndex>,
    pub scale: Vec<f64>,
    pub domain: StateBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
}

impl Dictionary {
    /// Scaled monomials of degree `1..=max_degree` in `n` variables.
    pub fn monomials(n: usize, max_degree: u32, domain: StateBox) -> Result<Self> {
        if n == 0 || max_degree == 0 {
            return Err(Error::InvalidArgument(
                "dictionary needs n >= 1 and max_degree >= 1".into(),
            ));
        }
        domain.validate()?;
        if domain.dim() != n {
            return Err(Error::Dimension(format!(
                "domain has dimension {}, dictionary {n}",
                domain.dim()
            )));
        }
        let multi_indices = monomial::graded_lex(n, 1, max_degree);
        let scale = multi_indices
            .iter()
            .map(|e| monomial::factorial_scale(e))
            .collect();
        Ok(Self {
            n,
            max_degree,
            multi_indices,
            scale,
            domain,
            lipschitz: None,
        })
    }

    /// Short content hash identifying the dictionary layout and domain.
    pub fn fingerprint(&self) -> String {
        let layout = Self {
            lipschitz: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&layout).expect("dictionary serializes");
        format!("dict-{}", &sha256_hex(&json)[..16])
    }

    /// Lifted dimension N.
    pub fn lifted_dim(&self) -> usize {
        self.multi_indices.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale.len() != self.multi_indices.len() {
            return Err(Error::Dimension(
                "scale and multi_indices lengths differ".into(),
            ));
        }
        if self.multi_indices.iter().any(|e| e.len() != self.n) {
            return Err(Error::Dimension("multi-index arity differs from n".into()));
        }
        if self.multi_indices.len() < self.n
            || (0..self.n).any(|i| {
                let e = &self.multi_indices[i];
                monomial::degree(e) != 1 || e[i] != 1 || self.scale[i] != 1.0
            })
        {
            return Err(Error::InvalidArgument(
                "the first n dictionary entries must be the coordinates".into(),
            ));
        }
        self.domain.validate()
    }

    fn check_input(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "state has length {}, expected {}",
                x.len(),
                self.n
            )));
        }
        ensure_finite(x.as_slice(), "lift input")
    }

    pub fn lift(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_input(x)?;
        Ok(self.lift_unchecked(x.as_slice()))
    }

    pub(crate) fn lift_unchecked(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.lifted_dim(),
            self.multi_indices
                .iter()
                .zip(&self.scale)
                .map(|(e, s)| s * monomial::value(e, x)),
        )
    }

    /// N×n matrix of partial derivatives ∂Ψ/∂x.
    pub fn lift_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        Ok(self.jacobian_unchecked(x.as_slice()))
    }

    fn jacobian_unchecked(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.lifted_dim(), self.n, |k, i| {
            self.scale[k] * monomial::partial(&self.multi_indices[k], x, i)
        })
    }

    /// Recovery matrix `C = [I 0]` with `C Ψ(x) = x`.
    pub fn recovery_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(
            self.n,
            self.lifted_dim(),
            |i, j| if i == j { 1.0 } else { 0.0 },
        )
    }

    pub fn recover(&self, z: &DVector<f64>) -> DVector<f64> {
        z.rows(0, self.n).into_owned()
    }

    /// Largest Jacobian spectral norm over a grid of `domain`; the result is
    /// also stored in `self.lipschitz`.
    pub fn estimate_lipschitz(&mut self, domain: &StateBox, grid_intervals: usize) -> Result<f64> {
        if domain.dim() != self.n {
            return Err(Error::Dimension("domain dimension differs from n".into()));
        }
        let grid = domain.grid(grid_intervals)?;
        let estimate = grid
            .par_iter()
            .map(|x| spectral_norm(&self.jacobian_unchecked(x.as_slice())))
            .collect::<Vec<_>>()
            .into_iter()
            .fold(0.0, f64::max);
        self.lipschitz = Some(estimate);
        Ok(estimate)
    }

    pub fn lipschitz(&self) -> Result<f64> {
        self.lipschitz
            .ok_or_else(|| Error::InvalidArgument("Lipschitz constant not estimated".into()))
    }

    /// Largest ‖Ψ(x)‖ over a grid of `domain`.
    pub fn max_lift_norm(&self, domain: &StateBox, grid_intervals: usize) -> Result<f64> {
        let grid = domain.grid(grid_intervals)?;
        Ok(grid
            .iter()
            .map(|x| self.lift_unchecked(x.as_slice()).norm())
            .fold(0.0, f64::max))
    }
}
