use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::StateBox;
use crate::error::{Error, Result};
use crate::linalg::PivotedQr;
use crate::monomial::{self, MultiIndex};
use crate::serde_matrix;

/// `V(z) = Σ θ_k φ_k(z)` over monomials φ_k in the lifted state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GalerkinValueFn {
    pub basis: Vec<MultiIndex>,
    #[serde(with = "serde_matrix::vector")]
    pub theta: DVector<f64>,
    /// State-space box whose lifted image is the computational domain.
    pub domain: StateBox,
}

impl GalerkinValueFn {
    pub fn new(basis: Vec<MultiIndex>, theta: DVector<f64>, domain: StateBox) -> Result<Self> {
        if basis.len() != theta.len() {
            return Err(Error::Dimension(format!(
                "{} basis functions but {} coefficients",
                basis.len(),
                theta.len()
            )));
        }
        if basis.iter().any(|e| monomial::degree(e) == 0) {
            return Err(Error::InvalidArgument(
                "constant basis functions are not allowed".into(),
            ));
        }
        if let Some(first) = basis.first() {
            if basis.iter().any(|e| e.len() != first.len()) {
                return Err(Error::Dimension(
                    "basis multi-indices differ in arity".into(),
                ));
            }
        }
        Ok(Self {
            basis,
            theta,
            domain,
        })
    }

    pub fn zeros(basis: Vec<MultiIndex>, domain: StateBox) -> Result<Self> {
        let m = basis.len();
        Self::new(basis, DVector::zeros(m), domain)
    }

    pub fn with_theta(&self, theta: DVector<f64>) -> Result<Self> {
        Self::new(self.basis.clone(), theta, self.domain.clone())
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn basis_values(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.basis.iter().map(|e| monomial::value(e, z.as_slice())),
        )
    }

    /// N×M matrix whose column k is ∇φ_k(z).
    pub fn basis_gradients(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let zs = z.as_slice();
        DMatrix::from_fn(z.len(), self.len(), |i, k| {
            monomial::partial(&self.basis[k], zs, i)
        })
    }

    pub fn basis_laplacians(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.basis
                .iter()
                .map(|e| monomial::laplacian(e, z.as_slice())),
        )
    }

    pub fn value(&self, z: &DVector<f64>) -> f64 {
        self.basis_values(z).dot(&self.theta)
    }

    pub fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let zs = z.as_slice();
        let mut g = DVector::zeros(z.len());
        for (e, t) in self.basis.iter().zip(self.theta.iter()) {
            if *t == 0.0 {
                continue;
            }
            for (i, gi) in g.iter_mut().enumerate() {
                if e[i] > 0 {
                    *gi += t * monomial::partial(e, zs, i);
                }
            }
        }
        g
    }

    pub fn laplacian(&self, z: &DVector<f64>) -> f64 {
        self.basis_laplacians(z).dot(&self.theta)
    }
}

/// Keeps the candidates whose evaluation columns at `points` are linearly
/// independent, by column-pivoted QR with relative pivot tolerance `tol`.
pub fn prune_basis(
    candidates: &[MultiIndex],
    points: &[DVector<f64>],
    tol: f64,
) -> Vec<MultiIndex> {
    let eval = DMatrix::from_fn(points.len(), candidates.len(), |j, k| {
        monomial::value(&candidates[k], points[j].as_slice())
    });
    PivotedQr::new(&eval)
        .independent_columns(tol)
        .into_iter()
        .map(|k| candidates[k].clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monomial::graded_lex;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quadratic_value(nvars: usize, seed: u64) -> GalerkinValueFn {
        let basis = graded_lex(nvars, 1, 3);
        let theta = DVector::from_iterator(
            basis.len(),
            (0..basis.len()).map(|k| ((k as f64 + 1.0) * (seed as f64 + 0.7)).sin()),
        );
        GalerkinValueFn::new(basis, theta, StateBox::symmetric(nvars, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn vanishes_at_origin() {
        let v = quadratic_value(4, 3);
        assert_eq!(v.value(&DVector::zeros(4)), 0.0);
    }

    #[test]
    fn constant_term_rejected() {
        let r = GalerkinValueFn::new(
            vec![vec![0, 0]],
            DVector::zeros(1),
            StateBox::symmetric(2, 1.0).unwrap(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn laplacian_of_squares_and_cross_terms() {
        let basis = vec![vec![2, 0], vec![1, 1], vec![0, 2]];
        let v = GalerkinValueFn::new(
            basis,
            DVector::from_vec(vec![1.0, 5.0, 3.0]),
            StateBox::symmetric(2, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(v.laplacian(&DVector::from_vec(vec![0.3, -0.2])), 8.0);
    }

    #[test]
    fn pruning_removes_manifold_dependencies() {
        // On points (x, x²) the monomials z1² and z2 coincide.
        let points: Vec<DVector<f64>> = (0..20)
            .map(|k| {
                let x = -1.0 + 0.1 * k as f64;
                DVector::from_vec(vec![x, x * x])
            })
            .collect();
        let candidates = graded_lex(2, 1, 2);
        let kept = prune_basis(&candidates, &points, 1e-8);
        assert_eq!(kept.len(), candidates.len() - 1);
    }

    #[test]
    fn json_roundtrip() {
        let v = quadratic_value(2, 1);
        let back: GalerkinValueFn =
            serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn gradient_and_laplacian_match_finite_differences(
            z in proptest::collection::vec(-1.0..1.0f64, 3),
            seed in 0u64..50,
        ) {
            let v = quadratic_value(3, seed);
            let z = DVector::from_vec(z);
            let g = v.gradient(&z);
            let h = 1e-5;
            let mut lap_fd = 0.0;
            for i in 0..3 {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let fd = (v.value(&zp) - v.value(&zm)) / (2.0 * h);
                prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0));
                let h2 = 1e-4;
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h2;
                zm[i] -= h2;
                lap_fd += (v.value(&zp) - 2.0 * v.value(&z) + v.value(&zm)) / (h2 * h2);
            }
            prop_assert!((lap_fd - v.laplacian(&z)).abs() <= 1e-5 * v.laplacian(&z).abs().max(1.0));
            assert_relative_eq!(v.basis_gradients(&z) * &v.theta, g, epsilon = 1e-12);
        }
    }
}
