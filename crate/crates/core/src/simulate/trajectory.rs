use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::hjsolve::Policy;
use crate::identify::{BilinearModel, ErrorBound};
use crate::lifting::Dictionary;
use crate::simulate::plant::Plant;
use crate::simulate::weights::CostWeights;

pub const DEFAULT_DIVERGENCE_CAP: f64 = 1e3;
pub const DEFAULT_GRADIENT_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub step: f64,
    #[serde(default = "default_cap")]
    pub divergence_cap: f64,
}

fn default_cap() -> f64 {
    DEFAULT_DIVERGENCE_CAP
}

impl SimConfig {
    pub fn new(horizon: f64, step: f64) -> Self {
        Self {
            horizon,
            step,
            divergence_cap: DEFAULT_DIVERGENCE_CAP,
        }
    }

    fn steps(&self) -> Result<usize> {
        if !(self.step > 0.0) || !(self.horizon >= self.step) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "need step > 0 and horizon >= step (step = {}, horizon = {})",
                self.step, self.horizon
            )));
        }
        Ok((self.horizon / self.step).round() as usize)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub lifted: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub injected_error: Vec<DVector<f64>>,
    /// Cumulative cost at each sample.
    pub running_cost: Vec<f64>,
    pub divergent: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.running_cost.last().copied().unwrap_or(0.0)
    }

    fn push(
        &mut self,
        t: f64,
        x: DVector<f64>,
        z: DVector<f64>,
        u: DVector<f64>,
        r: DVector<f64>,
        cost: f64,
    ) {
        self.times.push(t);
        self.states.push(x);
        self.lifted.push(z);
        self.inputs.push(u);
        self.injected_error.push(r);
        self.running_cost.push(cost);
    }

    /// CSV with columns `t, x_1..x_n, u_1..u_m, cost_cum, err_norm`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.states.first().map_or(0, |x| x.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend((1..=m).map(|i| format!("u_{i}")));
        header.push("cost_cum".into());
        header.push("err_norm".into());
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut row = vec![self.times[k].to_string()];
            row.extend(self.states[k].iter().map(f64::to_string));
            row.extend(self.inputs[k].iter().map(f64::to_string));
            row.push(self.running_cost[k].to_string());
            row.push(self.injected_error[k].norm().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn rk4_step(
    f: &impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
    x: &DVector<f64>,
    h: f64,
) -> Result<DVector<f64>> {
    let k1 = f(x)?;
    let k2 = f(&(x + &k1 * (0.5 * h)))?;
    let k3 = f(&(x + &k2 * (0.5 * h)))?;
    let k4 = f(&(x + &k3 * h))?;
    Ok(x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

/// Closed-loop simulation of the true plant with the policy evaluated at
/// the lifted state.
pub fn integrate(
    plant: &Plant,
    policy: &Policy,
    dict: &Dictionary,
    x0: &DVector<f64>,
    sim: &SimConfig,
    weights: &CostWeights,
) -> Result<Trajectory> {
    let steps = sim.steps()?;
    if x0.len() != plant.n || dict.n != plant.n {
        return Err(Error::Dimension(
            "initial state, plant and dictionary disagree".into(),
        ));
    }
    ensure_finite(x0.as_slice(), "initial state")?;
    let n_lift = dict.lifted_dim();
    let control = |x: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>)> {
        let z = dict.lift(x)?;
        let u = policy.eval(&z);
        ensure_finite(u.as_slice(), "control")?;
        Ok((z, u))
    };
    let field = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let (_, u) = control(x)?;
        Ok(plant.vector_field(x, &u))
    };

    let mut traj = Trajectory::default();
    let mut x = x0.clone();
    let (mut z, mut u) = control(&x)?;
    let mut integrand = weights.state_cost(&x, &u);
    let mut cost = 0.0;
    traj.push(
        0.0,
        x.clone(),
        z.clone(),
        u.clone(),
        DVector::zeros(n_lift),
        cost,
    );
    for k in 1..=steps {
        x = rk4_step(&field, &x, sim.step)?;
        ensure_finite(x.as_slice(), "plant state")?;
        if x.norm() > sim.divergence_cap {
            traj.divergent = true;
            break;
        }
        (z, u) = control(&x)?;
        let next = weights.state_cost(&x, &u);
        cost += 0.5 * sim.step * (integrand + next);
        integrand = next;
        traj.push(
            k as f64 * sim.step,
            x.clone(),
            z.clone(),
            u.clone(),
            DVector::zeros(n_lift),
            cost,
        );
    }
    Ok(traj)
}

pub type ErrorFn<'a> = &'a (dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Sync);

/// Closed-loop simulation of the lifted model `ż = Az + B(z)u + r(z,u)`.
pub fn integrate_lifted(
    model: &BilinearModel,
    policy: &Policy,
    error_fn: Option<ErrorFn<'_>>,
    z0: &DVector<f64>,
    sim: &SimConfig,
    weights: &CostWeights,
) -> Result<Trajectory> {
    let steps = sim.steps()?;
    if z0.len() != model.lifted_dim || weights.lifted.nrows() != model.lifted_dim {
        return Err(Error::Dimension(
            "initial lifted state, model and weights disagree".into(),
        ));
    }
    ensure_finite(z0.as_slice(), "initial lifted state")?;
    let n = weights.state_dim();
    let control = |z: &DVector<f64>| -> Result<(DVector<f64>, DVector<f64>)> {
        let u = policy.eval(z);
        ensure_finite(u.as_slice(), "control")?;
        let r = match error_fn {
            Some(f) => f(z, &u),
            None => DVector::zeros(z.len()),
        };
        Ok((u, r))
    };
    let field = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let (u, r) = control(z)?;
        Ok(model.vector_field(z, &u) + r)
    };

    let mut traj = Trajectory::default();
    let mut z = z0.clone();
    let (mut u, mut r) = control(&z)?;
    let mut integrand = weights.lifted_cost(&z, &u);
    let mut cost = 0.0;
    traj.push(
        0.0,
        z.rows(0, n).into_owned(),
        z.clone(),
        u.clone(),
        r.clone(),
        cost,
    );
    for k in 1..=steps {
        z = rk4_step(&field, &z, sim.step)?;
        ensure_finite(z.as_slice(), "lifted state")?;
        if z.norm() > sim.divergence_cap {
            traj.divergent = true;
            break;
        }
        (u, r) = control(&z)?;
        let next = weights.lifted_cost(&z, &u);
        cost += 0.5 * sim.step * (integrand + next);
        integrand = next;
        traj.push(
            k as f64 * sim.step,
            z.rows(0, n).into_owned(),
            z.clone(),
            u.clone(),
            r.clone(),
            cost,
        );
    }
    Ok(traj)
}

/// Admissible model error of maximal norm `c1‖z‖ + c2‖u‖` aligned with `grad_v`.
pub fn worst_case_error(
    z: &DVector<f64>,
    u: &DVector<f64>,
    grad_v: &DVector<f64>,
    eb: &ErrorBound,
    gradient_floor: f64,
) -> DVector<f64> {
    let g = grad_v.norm();
    let z_norm = z.norm();
    let u_norm = u.norm();
    if g < gradient_floor || (z_norm == 0.0 && u_norm == 0.0) {
        return DVector::zeros(z.len());
    }
    grad_v * (eb.bound(z_norm, u_norm) / g)
}
