//! Optimality-deviation bounds evaluated along simulated trajectories, the
//! performance-robustness trade-off and the cost comparison table.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjsolve::{GalerkinValueFn, Policy};
use crate::identify::{BilinearModel, ErrorBound};
use crate::lifting::Dictionary;
use crate::simulate::{
    integrate, integrate_lifted, worst_case_error, CostWeights, Plant, SimConfig, Trajectory,
    DEFAULT_GRADIENT_FLOOR,
};

/// Trapezoid rule on a possibly non-uniform grid.
pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

fn ensure_settled(traj: &Trajectory) -> Result<()> {
    if traj.divergent {
        return Err(Error::Divergent(traj.times.last().copied().unwrap_or(0.0)));
    }
    Ok(())
}

/// `∫‖∇V(z(t))‖² dt` over the stored lifted trajectory.
pub fn grad_norm_integral(traj: &Trajectory, valuefn: &GalerkinValueFn) -> Result<f64> {
    ensure_settled(traj)?;
    let values: Vec<f64> = traj
        .lifted
        .iter()
        .map(|z| valuefn.gradient(z).norm_squared())
        .collect();
    Ok(trapezoid(&traj.times, &values))
}

/// `∫(u − u_traj)ᵀR(u − u_traj) dt` where `u` is `policy` evaluated on the
/// stored lifted states and `u_traj` the applied inputs.
pub fn control_deviation_integral(
    traj: &Trajectory,
    policy: &Policy,
    weights: &CostWeights,
) -> Result<f64> {
    ensure_settled(traj)?;
    let values: Vec<f64> = traj
        .lifted
        .iter()
        .zip(&traj.inputs)
        .map(|(z, u_applied)| {
            let d = policy.eval(z) - u_applied;
            d.dot(&(&weights.input * &d))
        })
        .collect();
    Ok(trapezoid(&traj.times, &values))
}

/// `ΔV_max = ½C₁₂²I + (C₁₂/2)√I √(C₁₂²I + 4V₀)`.
pub fn value_deviation_bound(v0: f64, grad_integral: f64, eb: &ErrorBound) -> f64 {
    let c = eb.c12;
    let i = grad_integral.max(0.0);
    0.5 * c * c * i + 0.5 * c * i.sqrt() * (c * c * i + 4.0 * v0.max(0.0)).sqrt()
}

/// `2ΔV_max + 2C₁₂√((V₀ + ΔV_max) I)` with `I` taken along the actual
/// optimal trajectory.
pub fn controller_deviation_bound(
    dv_max: f64,
    v0: f64,
    grad_integral_actual: f64,
    eb: &ErrorBound,
) -> f64 {
    2.0 * dv_max + 2.0 * eb.c12 * ((v0 + dv_max).max(0.0) * grad_integral_actual.max(0.0)).sqrt()
}

/// `2C₁₂ √(V* I)` with `I = ∫‖∇V_ro‖²` along the actual optimal trajectory.
pub fn robust_controller_deviation_bound(
    v_star: f64,
    grad_integral_robust: f64,
    eb: &ErrorBound,
) -> f64 {
    2.0 * eb.c12 * (v_star.max(0.0) * grad_integral_robust.max(0.0)).sqrt()
}

/// Policies and value functions compared by the reports.
pub struct Controllers<'a> {
    pub nominal: &'a Policy,
    pub nominal_valuefn: &'a GalerkinValueFn,
    pub robust: &'a Policy,
    pub robust_valuefn: &'a GalerkinValueFn,
    /// Actual optimal feedback of the plant when known.
    pub actual: Option<&'a Policy>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub x0: Vec<f64>,
    /// Galerkin surrogate of V₀*(z₀).
    pub v0_at_x0: f64,
    /// `∫‖∇V₀‖²` along the nominal closed loop under the worst-case error.
    pub grad_integral: f64,
    pub dv_max: f64,
    /// `V − V₀` measured along the same trajectory.
    pub observed_value_dev: f64,
    /// `∫‖∇V₀‖²` along the actual optimal trajectory.
    pub grad_integral_actual: Option<f64>,
    pub controller_dev_bound: Option<f64>,
    /// `∫(u₀ − u*)ᵀR(u₀ − u*)` along the actual optimal trajectory.
    pub observed_dev: Option<f64>,
    pub v_star: Option<f64>,
    /// `∫‖∇V_ro‖²` along the actual optimal trajectory.
    pub grad_integral_robust: Option<f64>,
    pub robust_controller_dev_bound: Option<f64>,
    pub observed_robust_dev: Option<f64>,
    pub trajectory_ref: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub c12: f64,
    /// Gradient used to align the injected worst-case error.
    pub worst_case_gradient: String,
    pub value_surrogate: String,
    pub rows: Vec<DeviationRow>,
}

impl DeviationReport {
    /// Every computed bound dominates its measured counterpart.
    pub fn bounds_hold(&self, tol: f64) -> bool {
        self.rows.iter().all(|r| {
            r.observed_value_dev <= r.dv_max + tol
                && dominated(r.observed_dev, r.controller_dev_bound, tol)
                && dominated(r.observed_robust_dev, r.robust_controller_dev_bound, tol)
        })
    }
}

fn dominated(observed: Option<f64>, bound: Option<f64>, tol: f64) -> bool {
    match (observed, bound) {
        (Some(o), Some(b)) => o <= b + tol,
        _ => true,
    }
}

/// Evaluates the value and controller deviation bounds from each initial
/// state. The actual optimal trajectory runs on the true plant.
#[allow(clippy::too_many_arguments)]
pub fn deviation_report(
    plant: &Plant,
    dict: &Dictionary,
    model: &BilinearModel,
    weights: &CostWeights,
    eb: &ErrorBound,
    controllers: &Controllers<'_>,
    x0_list: &[DVector<f64>],
    sim: &SimConfig,
) -> Result<DeviationReport> {
    let v0fn = controllers.nominal_valuefn;
    let worst = |z: &DVector<f64>, u: &DVector<f64>| {
        worst_case_error(z, u, &v0fn.gradient(z), eb, DEFAULT_GRADIENT_FLOOR)
    };
    let rows: Vec<Result<DeviationRow>> = x0_list
        .par_iter()
        .map(|x0| {
            let z0 = dict.lift(x0)?;
            let v0 = v0fn.value(&z0);
            let wc = integrate_lifted(model, controllers.nominal, Some(&worst), &z0, sim, weights)?;
            let grad_integral = grad_norm_integral(&wc, v0fn)?;
            let dv_max = value_deviation_bound(v0, grad_integral, eb);
            let observed_value_dev = wc.total_cost() - v0;
            let mut row = DeviationRow {
                x0: x0.iter().copied().collect(),
                v0_at_x0: v0,
                grad_integral,
                dv_max,
                observed_value_dev,
                grad_integral_actual: None,
                controller_dev_bound: None,
                observed_dev: None,
                v_star: None,
                grad_integral_robust: None,
                robust_controller_dev_bound: None,
                observed_robust_dev: None,
                trajectory_ref: format!("lifted model, u0, worst-case error; {}", x0_label(x0)),
            };
            if let (Some(actual), Some(solution)) = (controllers.actual, plant.analytic()) {
                let opt = integrate(plant, actual, dict, x0, sim, weights)?;
                let i_actual = grad_norm_integral(&opt, v0fn)?;
                let i_robust = grad_norm_integral(&opt, controllers.robust_valuefn)?;
                let v_star = (solution.value)(x0);
                row.grad_integral_actual = Some(i_actual);
                row.controller_dev_bound =
                    Some(controller_deviation_bound(dv_max, v0, i_actual, eb));
                row.observed_dev = Some(control_deviation_integral(
                    &opt,
                    controllers.nominal,
                    weights,
                )?);
                row.v_star = Some(v_star);
                row.grad_integral_robust = Some(i_robust);
                row.robust_controller_dev_bound =
                    Some(robust_controller_deviation_bound(v_star, i_robust, eb));
                row.observed_robust_dev = Some(control_deviation_integral(
                    &opt,
                    controllers.robust,
                    weights,
                )?);
                row.trajectory_ref.push_str("; true plant under u*");
            }
            Ok(row)
        })
        .collect();
    Ok(DeviationReport {
        c12: eb.c12,
        worst_case_gradient: "nominal value function".into(),
        value_surrogate: "Galerkin nominal solution".into(),
        rows: rows.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    pub x0: Vec<f64>,
    /// `½∫(u_ro − u₀)ᵀR(u_ro − u₀)` along the error-free trajectory under u_ro.
    pub nominal_loss: f64,
    /// Worst-case gain bound along the u₀ trajectory under r*; `None` when
    /// that trajectory diverges.
    pub worstcase_gain_bound: Option<f64>,
    /// `J(u_ro, z, 0)`.
    pub cost_robust: f64,
    /// `J(u₀, z, 0)`.
    pub cost_nominal: f64,
    /// `J(u₀, z, r*) − J(u_ro, z, r*)`.
    pub observed_worstcase_gain: Option<f64>,
}

impl TradeoffRow {
    /// `J(u_ro) − J(u₀)` from the two cost simulations.
    pub fn cost_difference(&self) -> f64 {
        self.cost_robust - self.cost_nominal
    }

    /// Mismatch of the nominal-loss identity relative to the nominal loss.
    pub fn identity_error(&self) -> f64 {
        let diff = self.cost_difference() - self.nominal_loss;
        if self.nominal_loss == 0.0 {
            if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            diff / self.nominal_loss
        }
    }

    /// The same mismatch relative to the nominal cost.
    pub fn identity_error_cost_scale(&self) -> f64 {
        let diff = self.cost_difference() - self.nominal_loss;
        if self.cost_nominal == 0.0 {
            diff.abs()
        } else {
            diff / self.cost_nominal
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffReport {
    pub worst_case_gradient: String,
    pub rows: Vec<TradeoffRow>,
}

impl TradeoffReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x0", "nominal_loss", "worstcase_gain_bound"])?;
        for r in &self.rows {
            w.write_record([
                x0_label(&DVector::from_vec(r.x0.clone())),
                r.nominal_loss.to_string(),
                r.worstcase_gain_bound
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Nominal performance loss of the robust controller and the worst-case
/// gain bound of the nominal one, on the lifted model.
pub fn tradeoff_report(
    model: &BilinearModel,
    weights: &CostWeights,
    eb: &ErrorBound,
    controllers: &Controllers<'_>,
    z0_list: &[DVector<f64>],
    sim: &SimConfig,
) -> Result<TradeoffReport> {
    let vro = controllers.robust_valuefn;
    let lambda_r = weights.lambda_min_input;
    let worst = |z: &DVector<f64>, u: &DVector<f64>| {
        worst_case_error(z, u, &vro.gradient(z), eb, DEFAULT_GRADIENT_FLOOR)
    };
    let rows: Vec<Result<TradeoffRow>> = z0_list
        .par_iter()
        .map(|z0| {
            let ro = integrate_lifted(model, controllers.robust, None, z0, sim, weights)?;
            let nl = control_deviation_integral(&ro, controllers.nominal, weights)?;
            let nom = integrate_lifted(model, controllers.nominal, None, z0, sim, weights)?;
            ensure_settled(&nom)?;
            let wc0 = integrate_lifted(model, controllers.nominal, Some(&worst), z0, sim, weights)?;
            let (bound, observed) = if wc0.divergent {
                (None, None)
            } else {
                let values: Vec<f64> = wc0
                    .lifted
                    .iter()
                    .zip(&wc0.inputs)
                    .map(|(z, u0)| {
                        let d = controllers.robust.eval(z) - u0;
                        let dev = d.dot(&(&weights.input * &d));
                        (1.0 + 0.5 / lambda_r) * dev
                            + (1.0 + 1.0 / lambda_r)
                                * 0.5
                                * eb.c2
                                * eb.c2
                                * vro.gradient(z).norm_squared()
                    })
                    .collect();
                let wcro =
                    integrate_lifted(model, controllers.robust, Some(&worst), z0, sim, weights)?;
                let observed = (!wcro.divergent).then(|| wc0.total_cost() - wcro.total_cost());
                (Some(trapezoid(&wc0.times, &values)), observed)
            };
            Ok(TradeoffRow {
                x0: z0.rows(0, weights.state_dim()).iter().copied().collect(),
                nominal_loss: 0.5 * nl,
                worstcase_gain_bound: bound,
                cost_robust: ro.total_cost(),
                cost_nominal: nom.total_cost(),
                observed_worstcase_gain: observed,
            })
        })
        .collect();
    Ok(TradeoffReport {
        worst_case_gradient: "robust value function".into(),
        rows: rows.into_iter().collect::<Result<Vec<_>>>()?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub x0: Vec<f64>,
    /// `None` marks a divergent run.
    pub cost_actual: Option<f64>,
    pub cost_robust: Option<f64>,
    pub cost_baseline: Option<f64>,
    pub rel_extra_robust: Option<f64>,
    pub rel_extra_baseline: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostAverages {
    pub rel_extra_robust: f64,
    pub rel_extra_baseline: f64,
    /// Rows entering each average.
    pub rows_robust: usize,
    pub rows_baseline: usize,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Label of the reference controller in the "actual" column.
    pub reference: String,
    pub rows: Vec<CostRow>,
    pub averages: CostAverages,
}

fn relative_extra(cost: Option<f64>, reference: Option<f64>) -> Option<f64> {
    match (cost, reference) {
        (Some(c), Some(r)) if r > 0.0 => Some((c - r) / r),
        (Some(c), Some(r)) if r == 0.0 && c == 0.0 => Some(0.0),
        _ => None,
    }
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> (f64, usize, bool) {
    let mut sum = 0.0;
    let mut count = 0;
    let mut complete = true;
    for v in values {
        match v {
            Some(v) => {
                sum += v;
                count += 1;
            }
            None => complete = false,
        }
    }
    (
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        },
        count,
        complete,
    )
}

/// Simulates the true plant under each controller from each initial state.
#[allow(clippy::too_many_arguments)]
pub fn cost_table(
    plant: &Plant,
    dict: &Dictionary,
    reference: (&str, &Policy),
    robust: &Policy,
    baseline: &Policy,
    x0_list: &[DVector<f64>],
    weights: &CostWeights,
    sim: &SimConfig,
) -> Result<CostReport> {
    let policies = [reference.1, robust, baseline];
    let jobs: Vec<(usize, usize)> = (0..x0_list.len())
        .flat_map(|i| (0..3).map(move |p| (i, p)))
        .collect();
    let costs: Vec<Result<Option<f64>>> = jobs
        .par_iter()
        .map(|&(i, p)| {
            let traj = integrate(plant, policies[p], dict, &x0_list[i], sim, weights)?;
            Ok((!traj.divergent).then(|| traj.total_cost()))
        })
        .collect();
    let costs = costs.into_iter().collect::<Result<Vec<_>>>()?;
    let rows: Vec<CostRow> = x0_list
        .iter()
        .enumerate()
        .map(|(i, x0)| {
            let (a, r, b) = (costs[3 * i], costs[3 * i + 1], costs[3 * i + 2]);
            CostRow {
                x0: x0.iter().copied().collect(),
                cost_actual: a,
                cost_robust: r,
                cost_baseline: b,
                rel_extra_robust: relative_extra(r, a),
                rel_extra_baseline: relative_extra(b, a),
            }
        })
        .collect();
    let (avg_r, n_r, complete_r) = mean(rows.iter().map(|r| r.rel_extra_robust));
    let (avg_b, n_b, complete_b) = mean(rows.iter().map(|r| r.rel_extra_baseline));
    Ok(CostReport {
        reference: reference.0.to_string(),
        rows,
        averages: CostAverages {
            rel_extra_robust: avg_r,
            rel_extra_baseline: avg_b,
            rows_robust: n_r,
            rows_baseline: n_b,
            complete: complete_r && complete_b,
        },
    })
}

fn x0_label(x0: &DVector<f64>) -> String {
    let parts: Vec<String> = x0.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(","))
}

fn cell(v: Option<f64>) -> String {
    v.map(|c| format!("{c:.4}"))
        .unwrap_or_else(|| "diverged".into())
}

fn percent(v: Option<f64>) -> String {
    v.map(|c| format!("{:.2}%", 100.0 * c))
        .unwrap_or_else(|| "--".into())
}

impl CostReport {
    /// Plain-text table with the columns Initial State, Actual, Robust,
    /// LQR and the two relative extras.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "Initial State", "Actual", "Robust", "LQR", "Robust+", "LQR+"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:>10} {:>10} {:>10} {:>10} {:>10}",
                x0_label(&DVector::from_vec(r.x0.clone())),
                cell(r.cost_actual),
                cell(r.cost_robust),
                cell(r.cost_baseline),
                percent(r.rel_extra_robust),
                percent(r.rel_extra_baseline)
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "Average",
            "--",
            "--",
            "--",
            percent(Some(self.averages.rel_extra_robust)),
            percent(Some(self.averages.rel_extra_baseline))
        );
        if !self.averages.complete {
            let _ = writeln!(out, "averages exclude divergent rows");
        }
        let _ = writeln!(out, "reference controller: {}", self.reference);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StateBox;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn eb(c1: f64, c2: f64) -> ErrorBound {
        ErrorBound::new(c1, c2, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn value_bound_examples() {
        assert_eq!(value_deviation_bound(1.0, 2.0, &ErrorBound::zero()), 0.0);
        assert_eq!(value_deviation_bound(1.0, 0.0, &eb(0.5, 0.0)), 0.0);
        // C12 = 2c1 = 1.
        let e = eb(0.5, 0.0);
        assert_relative_eq!(e.c12, 1.0);
        assert_relative_eq!(
            value_deviation_bound(1.0, 1.0, &e),
            0.5 + 0.5 * 5.0_f64.sqrt(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn controller_bound_examples() {
        assert_eq!(
            controller_deviation_bound(0.0, 1.0, 1.0, &ErrorBound::zero()),
            0.0
        );
        assert_relative_eq!(
            controller_deviation_bound(0.0, 1.0, 1.0, &eb(0.5, 0.0)),
            2.0
        );
    }

    #[test]
    fn robust_controller_bound_examples() {
        assert_eq!(
            robust_controller_deviation_bound(1.0, 1.0, &ErrorBound::zero()),
            0.0
        );
        // 4c1L/√λ = 4c2/√λ = 1.
        assert_relative_eq!(
            robust_controller_deviation_bound(1.0, 1.0, &eb(0.25, 0.25)),
            1.0
        );
    }

    fn stored_trajectory(step: f64) -> (Trajectory, BilinearModel) {
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -1.0, -0.5]);
        let model = BilinearModel::linear(a, DMatrix::zeros(2, 1), "lin").unwrap();
        let weights =
            CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1), 2).unwrap();
        let z0 = DVector::from_vec(vec![1.0, -0.5]);
        let traj = integrate_lifted(
            &model,
            &Policy::zero(1),
            None,
            &z0,
            &SimConfig::new(8.0, step),
            &weights,
        )
        .unwrap();
        (traj, model)
    }

    #[test]
    fn zero_theta_gives_zero_integral() {
        let (traj, _) = stored_trajectory(1e-2);
        let v = GalerkinValueFn::zeros(
            vec![vec![2, 0], vec![1, 1]],
            StateBox::symmetric(2, 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(grad_norm_integral(&traj, &v).unwrap(), 0.0);
    }

    #[test]
    fn constant_gradient_norm() {
        let (traj, _) = stored_trajectory(1e-2);
        let v = GalerkinValueFn::new(
            vec![vec![1, 0]],
            DVector::from_element(1, 3.0),
            StateBox::symmetric(2, 1.0).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(
            grad_norm_integral(&traj, &v).unwrap(),
            9.0 * 8.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn divergent_trajectory_rejected() {
        let (mut traj, _) = stored_trajectory(1e-2);
        traj.divergent = true;
        let v =
            GalerkinValueFn::zeros(vec![vec![2, 0]], StateBox::symmetric(2, 1.0).unwrap()).unwrap();
        assert!(matches!(
            grad_norm_integral(&traj, &v),
            Err(Error::Divergent(_))
        ));
    }

    #[test]
    fn random_polynomial_matches_refined_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let basis = crate::monomial::graded_lex(2, 1, 3);
        let theta = DVector::from_iterator(
            basis.len(),
            (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)),
        );
        let v = GalerkinValueFn::new(basis, theta, StateBox::symmetric(2, 1.0).unwrap()).unwrap();
        let (coarse, _) = stored_trajectory(1e-2);
        let (fine, _) = stored_trajectory(1e-3);
        let a = grad_norm_integral(&coarse, &v).unwrap();
        let b = grad_norm_integral(&fine, &v).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-3);
    }

    #[test]
    fn identical_controllers_have_no_loss() {
        let (_, model) = stored_trajectory(1e-2);
        let weights =
            CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1), 2).unwrap();
        let v = GalerkinValueFn::new(
            vec![vec![2, 0], vec![0, 2]],
            DVector::from_vec(vec![0.5, 0.5]),
            StateBox::symmetric(2, 1.0).unwrap(),
        )
        .unwrap();
        let policy = Policy::linear_gain(DMatrix::from_row_slice(1, 2, &[0.3, 0.1]));
        let controllers = Controllers {
            nominal: &policy,
            nominal_valuefn: &v,
            robust: &policy,
            robust_valuefn: &v,
            actual: None,
        };
        let z0 = vec![DVector::from_vec(vec![1.0, -0.5])];
        let report = tradeoff_report(
            &model,
            &weights,
            &ErrorBound::zero(),
            &controllers,
            &z0,
            &SimConfig::new(5.0, 1e-2),
        )
        .unwrap();
        let row = &report.rows[0];
        assert_eq!(row.nominal_loss, 0.0);
        assert_eq!(row.worstcase_gain_bound, Some(0.0));
        assert_eq!(row.cost_difference(), 0.0);
        assert_eq!(row.identity_error(), 0.0);
    }

    #[test]
    fn origin_costs_are_zero() {
        let plant = Plant::benchmark();
        let dict = Dictionary::monomials(2, 3, StateBox::symmetric(2, 1.5).unwrap()).unwrap();
        let weights =
            CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(1, 1), 9).unwrap();
        let actual = Policy::analytic("u*", 2, plant.analytic().unwrap().control.clone());
        let lqr = Policy::linear_gain(DMatrix::from_element(1, 9, 0.1));
        let report = cost_table(
            &plant,
            &dict,
            ("u*", &actual),
            &Policy::zero(1),
            &lqr,
            &[DVector::zeros(2)],
            &weights,
            &SimConfig::new(1.0, 1e-2),
        )
        .unwrap();
        let row = &report.rows[0];
        assert_eq!(
            (row.cost_actual, row.cost_robust, row.cost_baseline),
            (Some(0.0), Some(0.0), Some(0.0))
        );
        assert_eq!(row.rel_extra_robust, Some(0.0));
        assert!(report.averages.complete);
        assert!(report.to_text().contains("Average"));
    }

    #[test]
    fn divergent_cells_are_marked() {
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let plant = Plant::linear("unstable", a, DMatrix::from_element(1, 1, 1.0)).unwrap();
        let dict = Dictionary::monomials(1, 1, StateBox::symmetric(1, 1.0).unwrap()).unwrap();
        let weights =
            CostWeights::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1), 1).unwrap();
        let stab = Policy::linear_gain(DMatrix::from_element(1, 1, 3.0));
        let sim = SimConfig {
            divergence_cap: 10.0,
            ..SimConfig::new(10.0, 1e-2)
        };
        let x0 = [
            DVector::from_element(1, 1.0),
            DVector::from_element(1, -0.5),
        ];
        let report = cost_table(
            &plant,
            &dict,
            ("K", &stab),
            &stab,
            &Policy::zero(1),
            &x0,
            &weights,
            &sim,
        )
        .unwrap();
        assert_eq!(report.rows[0].cost_baseline, None);
        assert_eq!(report.rows[0].rel_extra_baseline, None);
        assert_eq!(report.rows[0].rel_extra_robust, Some(0.0));
        assert!(!report.averages.complete);
        assert_eq!(report.averages.rows_baseline, 0);
        assert!(report.to_text().contains("diverged"));
    }

    proptest! {
        #[test]
        fn averages_are_arithmetic_means(extras in proptest::collection::vec(-0.5..2.0f64, 1..8)) {
            let (m, n, complete) = mean(extras.iter().map(|v| Some(*v)));
            prop_assert_eq!(n, extras.len());
            prop_assert!(complete);
            prop_assert!((m - extras.iter().sum::<f64>() / extras.len() as f64).abs() < 1e-12);
        }

        #[test]
        fn relative_extra_definition(a in 0.1..5.0f64, c in 0.0..5.0f64) {
            let r = relative_extra(Some(c), Some(a)).unwrap();
            prop_assert!((r - (c - a) / a).abs() < 1e-12);
        }

        #[test]
        fn value_bound_monotone(v0 in 0.0..3.0f64, i in 0.0..3.0f64, c in 0.0..1.0f64, dc in 0.0..0.5f64) {
            let lo = value_deviation_bound(v0, i, &eb(c, 0.0));
            let hi = value_deviation_bound(v0, i, &eb(c + dc, 0.0));
            prop_assert!(lo >= 0.0 && hi >= lo);
        }
    }
}
