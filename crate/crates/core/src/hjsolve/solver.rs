use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{halton, StateBox};
use crate::error::{Error, Result};
use crate::hjsolve::policy::{improved_control, FeedbackContext, Policy};
use crate::hjsolve::valuefn::{prune_basis, GalerkinValueFn};
use crate::identify::{BilinearModel, ErrorBound};
use crate::lifting::Dictionary;
use crate::monomial::{graded_lex, MultiIndex};
use crate::simulate::{integrate_lifted, CostWeights, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub epsilon: f64,
    /// Viscosity used for the error-free problem.
    pub nominal_epsilon: f64,
    pub nu: f64,
    pub rho: f64,
    pub rho_prime: f64,
    pub collocation_points: usize,
    pub probe_points: usize,
    pub max_iter: usize,
    pub gn_max_iter: usize,
    pub gn_tol: f64,
    pub basis_min_degree: u32,
    pub basis_max_degree: u32,
    pub prune_tol: f64,
    /// State-space box whose lifted image is sampled for collocation.
    pub domain: StateBox,
    pub admissibility_horizon: f64,
    pub admissibility_step: f64,
    pub admissibility_probes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            nominal_epsilon: 0.0,
            nu: 1e-4,
            rho: 1e-2,
            rho_prime: 1e-3,
            collocation_points: 5000,
            probe_points: 200,
            max_iter: 50,
            gn_max_iter: 200,
            gn_tol: 1e-10,
            basis_min_degree: 2,
            basis_max_degree: 2,
            prune_tol: 1e-8,
            domain: StateBox {
                lower: vec![-1.5, -1.5],
                upper: vec![1.5, 1.5],
            },
            admissibility_horizon: 10.0,
            admissibility_step: 1e-2,
            admissibility_probes: 8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("nu", self.nu),
            ("rho", self.rho),
            ("rho_prime", self.rho_prime),
            ("gn_tol", self.gn_tol),
            ("prune_tol", self.prune_tol),
            ("admissibility_horizon", self.admissibility_horizon),
            ("admissibility_step", self.admissibility_step),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("solver.{name} must be positive")));
            }
        }
        if !(self.epsilon >= 0.0 && self.nominal_epsilon >= 0.0) {
            return Err(Error::Config("viscosity must be nonnegative".into()));
        }
        if self.collocation_points == 0
            || self.probe_points == 0
            || self.max_iter == 0
            || self.gn_max_iter == 0
        {
            return Err(Error::Config("solver counts must be positive".into()));
        }
        if self.basis_min_degree == 0 || self.basis_min_degree > self.basis_max_degree {
            return Err(Error::Config(
                "basis degrees must satisfy 1 <= min <= max".into(),
            ));
        }
        self.domain.validate()
    }
}

/// H = pᵀAz + ½zᵀQz − ½pᵀB(z)R⁻¹B(z)ᵀp.
pub fn hamiltonian(
    z: &DVector<f64>,
    p: &DVector<f64>,
    model: &BilinearModel,
    weights: &CostWeights,
) -> f64 {
    let b = model.input_map(z).transpose() * p;
    p.dot(&(&model.drift * z)) + 0.5 * z.dot(&(&weights.lifted * z))
        - 0.5 * b.dot(&(&weights.input_inv * &b))
}

/// δ = −(c1‖z‖ + c2‖u‖)‖p‖ − c2²‖p‖²/(2‖u‖²) uᵀR⁻¹u with ‖u‖ floored at ρ′
/// in the normalized term.
pub fn delta_term(
    z: &DVector<f64>,
    u: &DVector<f64>,
    p: &DVector<f64>,
    eb: &ErrorBound,
    weights: &CostWeights,
    rho_prime: f64,
) -> f64 {
    let p_norm = p.norm();
    if p_norm == 0.0 {
        return 0.0;
    }
    let u_norm = u.norm();
    let floor = u_norm.max(rho_prime);
    let quad = u.dot(&(&weights.input_inv * u));
    -eb.bound(z.norm(), u_norm) * p_norm
        - eb.c2 * eb.c2 * p_norm * p_norm / (2.0 * floor * floor) * quad
}

/// Uniform samples of the state box lifted into z, keeping `‖z‖ ≥ ρ`.
pub fn sample_collocation_points<R: Rng + ?Sized>(
    dict: &Dictionary,
    domain: &StateBox,
    count: usize,
    rho: f64,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::InvalidArgument(
                "excluded ball covers the sampling domain".into(),
            ));
        }
        let z = dict.lift(&domain.sample(rng))?;
        if z.norm() >= rho {
            out.push(z);
        }
    }
    Ok(out)
}

/// Shifted Halton points of the state box lifted into z, keeping `‖z‖ ≥ ρ`.
pub fn probe_points<R: Rng + ?Sized>(
    dict: &Dictionary,
    domain: &StateBox,
    count: usize,
    rho: f64,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let shift: Vec<f64> = (0..domain.dim()).map(|_| rng.random::<f64>()).collect();
    let mut out = Vec::with_capacity(count);
    let mut index = 1;
    while out.len() < count {
        if index > 1000 * count.max(1) {
            return Err(Error::InvalidArgument(
                "excluded ball covers the probe domain".into(),
            ));
        }
        let unit: Vec<f64> = halton(index, domain.dim())
            .iter()
            .zip(&shift)
            .map(|(h, s)| (h + s).fract())
            .collect();
        index += 1;
        let z = dict.lift(&domain.from_unit(&unit))?;
        if z.norm() >= rho {
            out.push(z);
        }
    }
    Ok(out)
}

/// Candidate monomials in z pruned to those independent on `points`.
pub fn build_basis(
    lifted_dim: usize,
    cfg: &SolverConfig,
    points: &[DVector<f64>],
) -> Vec<MultiIndex> {
    let candidates = graded_lex(lifted_dim, cfg.basis_min_degree, cfg.basis_max_degree);
    prune_basis(&candidates, points, cfg.prune_tol)
}

/// Per-point basis gradients, Laplacians and cost terms.
type PointData = (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>, f64);

/// Per-point quantities for the collocation residual, precomputed for a
/// fixed basis and model.
#[derive(Clone, Debug)]
pub struct Collocation {
    pub points: Vec<DVector<f64>>,
    /// Basis gradients G_i (N×M).
    pub gradients: Vec<DMatrix<f64>>,
    /// Rows (A z_i)ᵀ G_i.
    pub drift_terms: DMatrix<f64>,
    /// B(z_i)ᵀ G_i (m×M).
    pub input_terms: Vec<DMatrix<f64>>,
    /// Rows of basis Laplacians.
    pub laplacians: DMatrix<f64>,
    pub state_costs: DVector<f64>,
    pub input_weight_inv: DMatrix<f64>,
}

impl Collocation {
    pub fn new(
        points: Vec<DVector<f64>>,
        template: &GalerkinValueFn,
        model: &BilinearModel,
        weights: &CostWeights,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("no collocation points".into()));
        }
        if points.len() < template.len() {
            return Err(Error::InvalidArgument(format!(
                "{} collocation points for {} basis functions",
                points.len(),
                template.len()
            )));
        }
        let per_point: Vec<PointData> = points
            .par_iter()
            .map(|z| {
                let g = template.basis_gradients(z);
                let drift = g.transpose() * (&model.drift * z);
                let input = model.input_map(z).transpose() * &g;
                let lap = template.basis_laplacians(z);
                let cost = 0.5 * z.dot(&(&weights.lifted * z));
                (g, drift, input, lap, cost)
            })
            .collect();
        let count = points.len();
        let m_basis = template.len();
        let mut drift_terms = DMatrix::zeros(count, m_basis);
        let mut laplacians = DMatrix::zeros(count, m_basis);
        let mut state_costs = DVector::zeros(count);
        let mut gradients = Vec::with_capacity(count);
        let mut input_terms = Vec::with_capacity(count);
        for (i, (g, drift, input, lap, cost)) in per_point.into_iter().enumerate() {
            drift_terms.set_row(i, &drift.transpose());
            laplacians.set_row(i, &lap.transpose());
            state_costs[i] = cost;
            gradients.push(g);
            input_terms.push(input);
        }
        Ok(Self {
            points,
            gradients,
            drift_terms,
            input_terms,
            laplacians,
            state_costs,
            input_weight_inv: weights.input_inv.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn value_gradients(&self, theta: &DVector<f64>) -> Vec<DVector<f64>> {
        self.gradients.par_iter().map(|g| g * theta).collect()
    }

    /// Residuals `−ε Lapᵀθ + H(z_i, G_iθ) − δ_i`.
    pub fn residuals(
        &self,
        theta: &DVector<f64>,
        epsilon: f64,
        delta: &DVector<f64>,
    ) -> DVector<f64> {
        let linear = &self.drift_terms * theta - &self.laplacians * theta * epsilon;
        let quad: Vec<f64> = self
            .input_terms
            .par_iter()
            .map(|w| {
                let wt = w * theta;
                0.5 * wt.dot(&(&self.input_weight_inv * &wt))
            })
            .collect();
        DVector::from_iterator(
            self.len(),
            (0..self.len()).map(|i| linear[i] + self.state_costs[i] - quad[i] - delta[i]),
        )
    }

    /// Jacobian rows `a_i − εL_i − (w_iθ)ᵀR⁻¹w_i`.
    pub fn jacobian(&self, theta: &DVector<f64>, epsilon: f64) -> DMatrix<f64> {
        let quad_rows: Vec<DVector<f64>> = self
            .input_terms
            .par_iter()
            .map(|w| {
                let wt = w * theta;
                w.transpose() * (&self.input_weight_inv * wt)
            })
            .collect();
        let mut jac = &self.drift_terms - &self.laplacians * epsilon;
        for (i, row) in quad_rows.iter().enumerate() {
            let mut r = jac.row_mut(i);
            r -= row.transpose();
        }
        jac
    }

    pub fn objective(&self, theta: &DVector<f64>, epsilon: f64, delta: &DVector<f64>) -> f64 {
        self.residuals(theta, epsilon, delta).norm_squared()
    }
}

#[derive(Clone, Debug)]
pub struct EvaluationOutcome {
    pub theta: DVector<f64>,
    /// Objective Σres² after each accepted step, starting with the initial value.
    pub objective_history: Vec<f64>,
    pub damped: bool,
    pub rms_residual: f64,
}

/// Minimizes Σres² over θ by Gauss–Newton with Levenberg damping on
/// rejection or singularity.
pub fn gauss_newton(
    colloc: &Collocation,
    delta: &DVector<f64>,
    epsilon: f64,
    theta0: &DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<EvaluationOutcome> {
    let mut theta = theta0.clone();
    let mut f = colloc.objective(&theta, epsilon, delta);
    let mut history = vec![f];
    let mut damped = false;
    let mut mu = 0.0_f64;
    for _ in 0..max_iter {
        let r = colloc.residuals(&theta, epsilon, delta);
        let jac = colloc.jacobian(&theta, epsilon);
        let jt = jac.transpose();
        let grad = &jt * &r;
        let normal = &jt * &jac;
        let diag = DMatrix::from_diagonal(&normal.diagonal().map(|d| d.max(f64::MIN_POSITIVE)));
        if grad.norm() <= f64::EPSILON * (1.0 + f) {
            return Ok(finish(colloc, theta, history, damped, epsilon, delta));
        }
        let mut accepted = None;
        for _ in 0..40 {
            let system = &normal + &diag * mu;
            let step = match system.cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => {
                    damped = true;
                    mu = if mu == 0.0 { 1e-10 } else { mu * 10.0 };
                    continue;
                }
            };
            let candidate = &theta + &step;
            let fc = colloc.objective(&candidate, epsilon, delta);
            if fc.is_finite() && fc <= f {
                accepted = Some((candidate, fc, step.norm()));
                mu /= 10.0;
                if mu < 1e-12 {
                    mu = 0.0;
                }
                break;
            }
            damped = true;
            mu = if mu == 0.0 { 1e-10 } else { mu * 10.0 };
        }
        let Some((candidate, fc, step_norm)) = accepted else {
            // No descent available along damped directions: stationary point.
            return Ok(finish(colloc, theta, history, damped, epsilon, delta));
        };
        let decrease = f - fc;
        theta = candidate;
        f = fc;
        history.push(f);
        if decrease <= tol * f.max(f64::MIN_POSITIVE) || step_norm <= tol * (1.0 + theta.norm()) {
            return Ok(finish(colloc, theta, history, damped, epsilon, delta));
        }
    }
    Err(Error::NotConverged {
        what: "Gauss-Newton policy evaluation",
        iterations: max_iter,
        history,
    })
}

fn finish(
    colloc: &Collocation,
    theta: DVector<f64>,
    history: Vec<f64>,
    damped: bool,
    epsilon: f64,
    delta: &DVector<f64>,
) -> EvaluationOutcome {
    let rms_residual = (colloc.objective(&theta, epsilon, delta) / colloc.len() as f64).sqrt();
    EvaluationOutcome {
        theta,
        objective_history: history,
        damped,
        rms_residual,
    }
}

/// δ at every collocation point from previous controls and value gradients.
pub fn delta_vector(
    colloc: &Collocation,
    controls: &[DVector<f64>],
    grads: &[DVector<f64>],
    eb: &ErrorBound,
    weights: &CostWeights,
    rho_prime: f64,
) -> DVector<f64> {
    let values: Vec<f64> = (0..colloc.len())
        .into_par_iter()
        .map(|i| {
            delta_term(
                &colloc.points[i],
                &controls[i],
                &grads[i],
                eb,
                weights,
                rho_prime,
            )
        })
        .collect();
    DVector::from_vec(values)
}

/// One policy-evaluation step for the given previous policy and value function.
pub fn policy_evaluation(
    colloc: &Collocation,
    policy_prev: &Policy,
    valuefn_prev: &GalerkinValueFn,
    eb: &ErrorBound,
    weights: &CostWeights,
    cfg: &SolverConfig,
    epsilon: f64,
) -> Result<EvaluationOutcome> {
    let controls: Vec<DVector<f64>> = colloc
        .points
        .par_iter()
        .map(|z| policy_prev.eval(z))
        .collect();
    let grads = colloc.value_gradients(&valuefn_prev.theta);
    let delta = delta_vector(colloc, &controls, &grads, eb, weights, cfg.rho_prime);
    gauss_newton(
        colloc,
        &delta,
        epsilon,
        &valuefn_prev.theta,
        cfg.gn_max_iter,
        cfg.gn_tol,
    )
}

/// Robust (or, with a zero bound, nominal) feedback from a new value function
/// and the previous policy.
pub fn policy_improvement(
    valuefn_new: Arc<GalerkinValueFn>,
    policy_prev: Arc<Policy>,
    context: FeedbackContext,
    eb: &ErrorBound,
    cfg: &SolverConfig,
) -> Policy {
    Policy::robust(valuefn_new, context, eb, cfg.rho_prime, Some(policy_prev))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub dtheta_rel: f64,
    pub dpolicy: f64,
    pub rms_residual: f64,
    pub contraction: Option<f64>,
    pub damped: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceLog {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub epsilon: f64,
}

impl ConvergenceLog {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iter", "dtheta_rel", "dpolicy"])?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                r.dtheta_rel.to_string(),
                r.dpolicy.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn final_policy_change(&self) -> Option<f64> {
        self.records.last().map(|r| r.dpolicy)
    }
}

#[derive(Clone, Debug)]
pub struct PolicyIterationResult {
    pub valuefn: Arc<GalerkinValueFn>,
    /// Explicit policy produced by the last improvement step.
    pub policy: Arc<Policy>,
    pub log: ConvergenceLog,
}

/// Everything the iteration needs besides the problem data.
pub struct IterationSetup<'a> {
    pub colloc: &'a Collocation,
    pub probe: &'a [DVector<f64>],
    pub epsilon: f64,
}

/// Alternates policy evaluation and improvement until the largest policy
/// change over the probe points drops below ν.
#[allow(clippy::too_many_arguments)]
pub fn run_policy_iteration(
    model: &Arc<BilinearModel>,
    weights: &CostWeights,
    eb: &ErrorBound,
    cfg: &SolverConfig,
    init_policy: Arc<Policy>,
    init_valuefn: &GalerkinValueFn,
    setup: &IterationSetup<'_>,
) -> Result<PolicyIterationResult> {
    cfg.validate()?;
    check_admissible(model, weights, cfg, &init_policy, setup.probe)?;
    let colloc = setup.colloc;
    let context = FeedbackContext::new(model.clone(), weights);
    let mut controls: Vec<DVector<f64>> = colloc
        .points
        .par_iter()
        .map(|z| init_policy.eval(z))
        .collect();
    let mut probe_controls: Vec<DVector<f64>> = setup
        .probe
        .par_iter()
        .map(|z| init_policy.eval(z))
        .collect();
    let mut grads = colloc.value_gradients(&init_valuefn.theta);
    let mut theta = init_valuefn.theta.clone();
    let mut policy = init_policy;
    let mut valuefn = Arc::new(init_valuefn.clone());
    let mut log = ConvergenceLog {
        epsilon: setup.epsilon,
        ..ConvergenceLog::default()
    };
    let mut prev_step: Option<f64> = None;
    for iter in 1..=cfg.max_iter {
        let delta = delta_vector(colloc, &controls, &grads, eb, weights, cfg.rho_prime);
        let outcome = gauss_newton(
            colloc,
            &delta,
            setup.epsilon,
            &theta,
            cfg.gn_max_iter,
            cfg.gn_tol,
        )?;
        let new_valuefn = Arc::new(init_valuefn.with_theta(outcome.theta.clone())?);
        let new_policy = Arc::new(policy_improvement(
            new_valuefn.clone(),
            policy.clone(),
            context.clone(),
            eb,
            cfg,
        ));

        let new_grads = colloc.value_gradients(&outcome.theta);
        let update = |z: &DVector<f64>, p: &DVector<f64>, u_prev: &DVector<f64>| {
            let b = model.input_map(z).transpose() * p;
            improved_control(
                &b,
                p.norm(),
                u_prev,
                &weights.input_inv,
                eb.c2,
                cfg.rho_prime,
            )
        };
        let new_controls: Vec<DVector<f64>> = (0..colloc.len())
            .into_par_iter()
            .map(|i| update(&colloc.points[i], &new_grads[i], &controls[i]))
            .collect();
        let new_probe_controls: Vec<DVector<f64>> = (0..setup.probe.len())
            .into_par_iter()
            .map(|j| {
                let z = &setup.probe[j];
                update(z, &new_valuefn.gradient(z), &probe_controls[j])
            })
            .collect();
        let dpolicy = new_probe_controls
            .iter()
            .zip(&probe_controls)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        let step = (&outcome.theta - &theta).norm();
        let dtheta_rel = step / outcome.theta.norm().max(f64::MIN_POSITIVE);
        let contraction = prev_step.map(|p| if p > 0.0 { step / p } else { 0.0 });
        prev_step = Some(step);
        log::info!(
            "policy iteration {iter}: dtheta_rel {dtheta_rel:.3e}, dpolicy {dpolicy:.3e}, rms {:.3e}",
            outcome.rms_residual
        );
        log.records.push(IterationRecord {
            iter,
            dtheta_rel,
            dpolicy,
            rms_residual: outcome.rms_residual,
            contraction,
            damped: outcome.damped,
        });

        theta = outcome.theta;
        valuefn = new_valuefn;
        policy = new_policy;
        controls = new_controls;
        probe_controls = new_probe_controls;
        grads = new_grads;
        if dpolicy < cfg.nu {
            log.converged = true;
            break;
        }
    }
    if !log.converged {
        log::warn!(
            "policy iteration stopped at max_iter = {} without meeting ν",
            cfg.max_iter
        );
    }
    Ok(PolicyIterationResult {
        valuefn,
        policy,
        log,
    })
}

fn check_admissible(
    model: &BilinearModel,
    weights: &CostWeights,
    cfg: &SolverConfig,
    policy: &Policy,
    probe: &[DVector<f64>],
) -> Result<()> {
    let sim = SimConfig::new(cfg.admissibility_horizon, cfg.admissibility_step);
    let results: Vec<Result<bool>> = probe
        .par_iter()
        .take(cfg.admissibility_probes)
        .map(|z| Ok(integrate_lifted(model, policy, None, z, &sim, weights)?.divergent))
        .collect();
    for (z, r) in probe.iter().zip(results) {
        match r {
            Ok(false) => {}
            Ok(true) | Err(Error::NonFinite(_)) => {
                return Err(Error::Inadmissible(z.iter().copied().collect()))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// Least-squares fit of θ to the closed-loop cost of `policy` on the lifted
/// model, simulated from each probe point.
pub fn fit_initial_value(
    model: &BilinearModel,
    weights: &CostWeights,
    policy: &Policy,
    template: &GalerkinValueFn,
    probe: &[DVector<f64>],
    sim: &SimConfig,
) -> Result<GalerkinValueFn> {
    let costs: Vec<Result<f64>> = probe
        .par_iter()
        .map(|z| {
            let traj = integrate_lifted(model, policy, None, z, sim, weights)?;
            if traj.divergent {
                return Err(Error::Inadmissible(z.iter().copied().collect()));
            }
            Ok(traj.total_cost())
        })
        .collect();
    let costs = DVector::from_vec(costs.into_iter().collect::<Result<Vec<_>>>()?);
    let design = DMatrix::from_fn(probe.len(), template.len(), |j, k| {
        crate::monomial::value(&template.basis[k], probe[j].as_slice())
    });
    let (theta, _) = crate::linalg::least_squares(
        &design,
        &DMatrix::from_column_slice(costs.len(), 1, costs.as_slice()),
    )?;
    template.with_theta(theta.column(0).into_owned())
}

/// Error-free problem: the same iteration with zero error bound.
#[allow(clippy::too_many_arguments)]
pub fn solve_nominal(
    model: &Arc<BilinearModel>,
    weights: &CostWeights,
    cfg: &SolverConfig,
    init_policy: Arc<Policy>,
    init_valuefn: &GalerkinValueFn,
    colloc: &Collocation,
    probe: &[DVector<f64>],
) -> Result<(PolicyIterationResult, Policy)> {
    if cfg.nominal_epsilon > 0.0 {
        log::info!("nominal solve uses viscosity {}", cfg.nominal_epsilon);
    }
    let setup = IterationSetup {
        colloc,
        probe,
        epsilon: cfg.nominal_epsilon,
    };
    let result = run_policy_iteration(
        model,
        weights,
        &ErrorBound::zero(),
        cfg,
        init_policy,
        init_valuefn,
        &setup,
    )?;
    let nominal = Policy::nominal(
        result.valuefn.clone(),
        FeedbackContext::new(model.clone(), weights),
    );
    Ok((result, nominal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar() -> (BilinearModel, CostWeights) {
        let model = BilinearModel::linear(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            "s",
        )
        .unwrap();
        let weights =
            CostWeights::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1), 1).unwrap();
        (model, weights)
    }

    #[test]
    fn hamiltonian_examples() {
        let (model, weights) = scalar();
        let z = DVector::from_element(1, 1.0);
        assert_relative_eq!(
            hamiltonian(&z, &DVector::from_element(1, 2.0), &model, &weights),
            -3.5
        );
        assert_relative_eq!(hamiltonian(&z, &DVector::zeros(1), &model, &weights), 0.5);
        assert_relative_eq!(
            hamiltonian(
                &DVector::zeros(1),
                &DVector::from_element(1, 3.0),
                &model,
                &weights
            ),
            -4.5
        );
    }

    #[test]
    fn delta_examples() {
        let (_, weights) = scalar();
        let z = DVector::from_element(1, 2.0);
        let u = DVector::from_element(1, -0.7);
        let p = DVector::from_element(1, 1.5);
        assert_eq!(
            delta_term(&z, &u, &p, &ErrorBound::zero(), &weights, 1e-3),
            0.0
        );
        let eb = ErrorBound::new(0.2, 0.3, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(
            delta_term(&z, &u, &DVector::zeros(1), &eb, &weights, 1e-3),
            0.0
        );
        let expected = -(0.2 * 2.0 + 0.3 * 0.7) * 1.5 - 0.09 * 1.5 * 1.5 / 2.0;
        assert_relative_eq!(
            delta_term(&z, &u, &p, &eb, &weights, 1e-3),
            expected,
            epsilon = 1e-15
        );
    }

    #[test]
    fn delta_identity_weight_two_inputs() {
        let weights =
            CostWeights::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2), 3).unwrap();
        let eb = ErrorBound::new(0.1, 0.4, 1.0, 1.0, 1.0).unwrap();
        let z = DVector::from_vec(vec![0.3, -1.0, 2.0]);
        let u = DVector::from_vec(vec![0.5, -0.25]);
        let p = DVector::from_vec(vec![1.0, 0.5, -0.5]);
        let (zn, un, pn): (f64, f64, f64) = (z.norm(), u.norm(), p.norm());
        let expected = -(0.1 * zn + 0.4 * un) * pn - 0.16 * pn * pn / 2.0;
        assert_relative_eq!(
            delta_term(&z, &u, &p, &eb, &weights, 1e-3),
            expected,
            epsilon = 1e-14
        );
    }

    #[test]
    fn config_rejects_nonpositive() {
        let cfg = SolverConfig {
            nu: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn scalar_lqr_fixed_point() {
        // ż = −z + u, Q = R = 1: P = √2 − 1, V = ½Pz² so θ = P/2 on basis z².
        let (model, weights) = scalar();
        let template =
            GalerkinValueFn::zeros(vec![vec![2]], StateBox::symmetric(1, 1.0).unwrap()).unwrap();
        let points: Vec<DVector<f64>> = (1..=20)
            .map(|k| DVector::from_element(1, 0.05 * k as f64))
            .collect();
        let colloc = Collocation::new(points, &template, &model, &weights).unwrap();
        let delta = DVector::zeros(colloc.len());
        let out = gauss_newton(
            &colloc,
            &delta,
            0.0,
            &DVector::from_element(1, 1.0),
            100,
            1e-14,
        )
        .unwrap();
        assert_relative_eq!(out.theta[0], (2.0_f64.sqrt() - 1.0) / 2.0, epsilon = 1e-10);
        assert!(out.rms_residual < 1e-10);
        assert!(out.objective_history.windows(2).all(|w| w[1] <= w[0]));
    }
}
