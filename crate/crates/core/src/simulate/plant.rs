use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type VectorField = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

pub const BENCHMARK: &str = "paper-benchmark";

/// Known optimal value function and feedback for a plant.
#[derive(Clone)]
pub struct AnalyticSolution {
    pub value: ScalarField,
    pub control: VectorField,
}

/// Control-affine plant `ẋ = f(x) + Σ g_i(x) u_i`.
#[derive(Clone)]
pub struct Plant {
    pub name: String,
    pub n: usize,
    pub m: usize,
    drift: VectorField,
    input_maps: Vec<VectorField>,
    analytic: Option<AnalyticSolution>,
}

impl fmt::Debug for Plant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Plant")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("m", &self.m)
            .field("analytic", &self.analytic.is_some())
            .finish()
    }
}

impl Plant {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        drift: VectorField,
        input_maps: Vec<VectorField>,
    ) -> Result<Self> {
        let plant = Self {
            name: name.into(),
            n,
            m: input_maps.len(),
            drift,
            input_maps,
            analytic: None,
        };
        let origin = (plant.drift)(&DVector::zeros(n));
        if origin.len() != n {
            return Err(Error::Dimension(
                "drift output length differs from n".into(),
            ));
        }
        if origin.amax() > 0.0 {
            return Err(Error::InvalidArgument(
                "drift must vanish at the origin".into(),
            ));
        }
        Ok(plant)
    }

    pub fn with_analytic(mut self, solution: AnalyticSolution) -> Self {
        self.analytic = Some(solution);
        self
    }

    pub fn analytic(&self) -> Option<&AnalyticSolution> {
        self.analytic.as_ref()
    }

    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.drift)(x)
    }

    pub fn input_matrix(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n, self.m);
        for (i, gi) in self.input_maps.iter().enumerate() {
            g.set_column(i, &gi(x));
        }
        g
    }

    pub fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut dx = (self.drift)(x);
        for (gi, ui) in self.input_maps.iter().zip(u.iter()) {
            dx += gi(x) * *ui;
        }
        dx
    }

    /// Linear plant `ẋ = A x + B u`.
    pub fn linear(name: impl Into<String>, a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || b.nrows() != a.nrows() {
            return Err(Error::Dimension(
                "linear plant matrices are inconsistent".into(),
            ));
        }
        let n = a.nrows();
        let drift: VectorField = Arc::new(move |x: &DVector<f64>| &a * x);
        let input_maps = (0..b.ncols())
            .map(|i| {
                let col = b.column(i).into_owned();
                Arc::new(move |_: &DVector<f64>| col.clone()) as VectorField
            })
            .collect();
        Self::new(name, n, drift, input_maps)
    }

    /// `ẋ1 = −x1 + x2`, `ẋ2 = −½(x1 + x2) + ½x1²x2 + x1 u`, whose optimal
    /// control for Q̄ = I, R = 1 is `u* = −x1x2` with value `¼x1² + ½x2²`.
    pub fn benchmark() -> Self {
        let drift: VectorField = Arc::new(|x: &DVector<f64>| {
            DVector::from_vec(vec![
                -x[0] + x[1],
                -0.5 * (x[0] + x[1]) + 0.5 * x[0] * x[0] * x[1],
            ])
        });
        let g: VectorField = Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![0.0, x[0]]));
        Self::new(BENCHMARK, 2, drift, vec![g])
            .expect("benchmark drift vanishes at the origin")
            .with_analytic(AnalyticSolution {
                value: Arc::new(|x: &DVector<f64>| 0.25 * x[0] * x[0] + 0.5 * x[1] * x[1]),
                control: Arc::new(|x: &DVector<f64>| DVector::from_vec(vec![-x[0] * x[1]])),
            })
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            BENCHMARK => Ok(Self::benchmark()),
            other => Err(Error::UnknownPlant(other.to_string())),
        }
    }
}
