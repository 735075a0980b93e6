use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower_i, upper_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let b = Self { lower, upper };
        b.validate()?;
        Ok(b)
    }

    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() || self.lower.is_empty() {
            return Err(Error::InvalidArgument(
                "box bounds must be nonempty and of equal length".into(),
            ));
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(Error::InvalidArgument(format!(
                    "empty or unbounded box [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| l + (u - l) * rng.random::<f64>()),
        )
    }

    /// Maps a point of the unit cube onto the box.
    pub fn from_unit(&self, unit: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.dim(),
            unit.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(s, (l, u))| l + (u - l) * s),
        )
    }

    /// Tensor grid with `intervals` equal subdivisions per axis
    /// (`intervals + 1` points per axis, endpoints included).
    pub fn grid(&self, intervals: usize) -> Result<Vec<DVector<f64>>> {
        self.validate()?;
        if intervals == 0 {
            return Err(Error::InvalidArgument(
                "grid needs at least one interval".into(),
            ));
        }
        let axes: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                (0..=intervals)
                    .map(|k| l + (u - l) * k as f64 / intervals as f64)
                    .collect()
            })
            .collect();
        let mut points = vec![Vec::new()];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        Ok(points.into_iter().map(DVector::from_vec).collect())
    }
}

/// Halton sequence point `index` (starting at 1) in `dim` dimensions.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    (0..dim)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_size_and_endpoints() {
        let b = StateBox::symmetric(2, 1.0).unwrap();
        let g = b.grid(4).unwrap();
        assert_eq!(g.len(), 25);
        assert!(g.iter().all(|p| b.contains(p)));
        assert_eq!(g[0], DVector::from_vec(vec![-1.0, -1.0]));
        assert_eq!(g[24], DVector::from_vec(vec![1.0, 1.0]));
    }

    #[test]
    fn empty_box_rejected() {
        assert!(StateBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(StateBox::new(vec![], vec![]).is_err());
        assert!(StateBox::symmetric(1, 1.0).unwrap().grid(0).is_err());
    }

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(1, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(2, 2), vec![0.25, 2.0 / 3.0]);
    }
}
