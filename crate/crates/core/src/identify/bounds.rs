use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identify::data::DataBatch;
use crate::identify::model::BilinearModel;

/// Per-sample norms entering the error-bound LP.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualNorms {
    pub residual: Vec<f64>,
    pub state: Vec<f64>,
    pub input: Vec<f64>,
}

pub fn residual_norms(batch: &DataBatch, model: &BilinearModel) -> ResidualNorms {
    let residual_matrix: DMatrix<f64> = &batch.derivatives - model.stacked() * &batch.regressor;
    let cols = |m: &DMatrix<f64>| -> Vec<f64> {
        (0..m.ncols())
            .into_par_iter()
            .map(|j| m.column(j).norm())
            .collect()
    };
    ResidualNorms {
        residual: cols(&residual_matrix),
        state: cols(&batch.lifted),
        input: cols(&batch.inputs),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCoefficients {
    pub c1: f64,
    pub c2: f64,
    /// Smallest `c1‖z_j‖ + c2‖u_j‖ − ‖r_j‖` over samples.
    pub min_slack: f64,
    pub objective_weights: [f64; 2],
}

/// Minimizes `w1 c1 + w2 c2` subject to `‖r_j‖ ≤ c1‖z_j‖ + c2‖u_j‖` and
/// `c1, c2 ≥ 0`.
pub fn estimate_error_bounds(
    batch: &DataBatch,
    model: &BilinearModel,
    objective_weights: [f64; 2],
) -> Result<ErrorCoefficients> {
    let norms = residual_norms(batch, model);
    solve_bound_lp(&norms, objective_weights)
}

/// Exact solution of the two-variable LP. For fixed `c1 = t` the smallest
/// feasible `c2` is the upper envelope `g(t) = max_j (r_j − a_j t)/b_j`
/// clipped at zero, so the convex objective is minimized at `t_lo`, at an
/// envelope vertex (intersection of two constraints) or where the envelope
/// meets the `c2 = 0` axis.
pub fn solve_bound_lp(
    norms: &ResidualNorms,
    objective_weights: [f64; 2],
) -> Result<ErrorCoefficients> {
    let [w1, w2] = objective_weights;
    if !(w1 > 0.0 && w2 > 0.0) || !w1.is_finite() || !w2.is_finite() {
        return Err(Error::InvalidArgument(
            "LP objective weights must be positive".into(),
        ));
    }
    let count = norms.residual.len();
    if norms.state.len() != count || norms.input.len() != count {
        return Err(Error::Dimension(
            "residual norm lists differ in length".into(),
        ));
    }
    let mut t_lo: f64 = 0.0;
    // Lines c2 = intercept + slope * c1.
    let mut lines: Vec<(f64, f64)> = Vec::new();
    for j in 0..count {
        let (r, a, b) = (norms.residual[j], norms.state[j], norms.input[j]);
        if !(r.is_finite() && a.is_finite() && b.is_finite()) {
            return Err(Error::NonFinite("LP data"));
        }
        if r <= 0.0 {
            continue;
        }
        if a == 0.0 && b == 0.0 {
            return Err(Error::Infeasible {
                sample: j,
                residual: r,
            });
        }
        if b == 0.0 {
            t_lo = t_lo.max(r / a);
        } else {
            lines.push((r / b, -a / b));
        }
    }
    let hull = upper_envelope(lines.clone());
    let envelope = |t: f64| -> f64 { lines.iter().map(|(p, s)| p + s * t).fold(0.0_f64, f64::max) };
    let mut candidates = vec![t_lo];
    for pair in hull.windows(2) {
        let ((p1, s1), (p2, s2)) = (pair[0], pair[1]);
        candidates.push((p2 - p1) / (s1 - s2));
    }
    for &(p, s) in &hull {
        if s < 0.0 {
            candidates.push(-p / s);
        }
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for t in candidates
        .into_iter()
        .filter(|t| t.is_finite() && *t >= t_lo)
    {
        let c2 = envelope(t);
        let value = w1 * t + w2 * c2;
        let better = match best {
            None => true,
            Some((bv, bt, _)) => value < bv || (value == bv && t < bt),
        };
        if better {
            best = Some((value, t, c2));
        }
    }
    let (_, c1, c2) = best.expect("t_lo is always a candidate");
    let min_slack = (0..count)
        .map(|j| c1 * norms.state[j] + c2 * norms.input[j] - norms.residual[j])
        .fold(f64::INFINITY, f64::min);
    Ok(ErrorCoefficients {
        c1,
        c2,
        min_slack: if count == 0 { 0.0 } else { min_slack },
        objective_weights,
    })
}

/// Lines of the pointwise maximum `max_j (p_j + s_j t)` ordered left to right.
fn upper_envelope(mut lines: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    lines.sort_by(|a, b| a.1.total_cmp(&b.1).then(b.0.total_cmp(&a.0)));
    lines.dedup_by(|later, earlier| later.1 == earlier.1);
    let mut hull: Vec<(f64, f64)> = Vec::new();
    let cross = |a: (f64, f64), b: (f64, f64)| (b.0 - a.0) / (a.1 - b.1);
    for line in lines {
        while hull.len() >= 2 {
            let l1 = hull[hull.len() - 2];
            let l2 = hull[hull.len() - 1];
            if cross(l1, line) <= cross(l1, l2) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(line);
    }
    hull
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norms(rows: &[(f64, f64, f64)]) -> ResidualNorms {
        ResidualNorms {
            residual: rows.iter().map(|r| r.0).collect(),
            state: rows.iter().map(|r| r.1).collect(),
            input: rows.iter().map(|r| r.2).collect(),
        }
    }

    /// Enumerates every pairwise constraint intersection and both axes.
    fn brute_force(n: &ResidualNorms, w: [f64; 2]) -> f64 {
        let rows: Vec<(f64, f64, f64)> = (0..n.residual.len())
            .map(|j| (n.residual[j], n.state[j], n.input[j]))
            .collect();
        let mut cons: Vec<(f64, f64, f64)> = rows.clone();
        cons.push((0.0, 1.0, 0.0));
        cons.push((0.0, 0.0, 1.0));
        let feasible = |c1: f64, c2: f64| {
            c1 >= -1e-12 && c2 >= -1e-12 && rows.iter().all(|(r, a, b)| a * c1 + b * c2 >= r - 1e-9)
        };
        let mut best = f64::INFINITY;
        for i in 0..cons.len() {
            for k in i + 1..cons.len() {
                let (r1, a1, b1) = cons[i];
                let (r2, a2, b2) = cons[k];
                let det = a1 * b2 - a2 * b1;
                if det.abs() < 1e-14 {
                    continue;
                }
                let c1 = (r1 * b2 - r2 * b1) / det;
                let c2 = (a1 * r2 - a2 * r1) / det;
                if feasible(c1, c2) {
                    best = best.min(w[0] * c1 + w[1] * c2);
                }
            }
        }
        best
    }

    #[test]
    fn zero_residuals_give_zero() {
        let sol = solve_bound_lp(&norms(&[(0.0, 1.0, 2.0), (0.0, 0.0, 0.0)]), [1.0, 1.0]).unwrap();
        assert_eq!((sol.c1, sol.c2), (0.0, 0.0));
    }

    #[test]
    fn two_sample_example() {
        let sol = solve_bound_lp(&norms(&[(1.0, 1.0, 0.0), (1.0, 0.0, 1.0)]), [1.0, 1.0]).unwrap();
        assert_eq!((sol.c1, sol.c2), (1.0, 1.0));
        assert!(sol.min_slack >= 0.0);
    }

    #[test]
    fn infeasible_sample_reported() {
        let err =
            solve_bound_lp(&norms(&[(1.0, 1.0, 1.0), (0.5, 0.0, 0.0)]), [1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Infeasible { sample: 1, .. }));
    }

    #[test]
    fn weights_shift_the_optimum() {
        let data = norms(&[(1.0, 1.0, 1.0)]);
        let a = solve_bound_lp(&data, [1.0, 2.0]).unwrap();
        assert_eq!((a.c1, a.c2), (1.0, 0.0));
        let b = solve_bound_lp(&data, [2.0, 1.0]).unwrap();
        assert_eq!((b.c1, b.c2), (0.0, 1.0));
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            rows in proptest::collection::vec((0.0..1.0f64, 0.0..2.0f64, 0.0..2.0f64), 1..25),
            w1 in 0.2..3.0f64,
            w2 in 0.2..3.0f64,
        ) {
            let rows: Vec<(f64, f64, f64)> = rows.into_iter().map(|(r, a, b)| (r, a + 1e-3, b)).collect();
            let data = norms(&rows);
            let sol = solve_bound_lp(&data, [w1, w2]).unwrap();
            prop_assert!(sol.min_slack >= -1e-9);
            prop_assert!(sol.c1 >= 0.0 && sol.c2 >= 0.0);
            let oracle = brute_force(&data, [w1, w2]);
            let value = w1 * sol.c1 + w2 * sol.c2;
            prop_assert!((value - oracle).abs() <= 1e-9 * oracle.max(1.0), "lp {value} oracle {oracle}");
        }
    }
}
