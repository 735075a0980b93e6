use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hjsolve::valuefn::GalerkinValueFn;
use crate::identify::{BilinearModel, ErrorBound};
use crate::simulate::plant::VectorField;
use crate::simulate::CostWeights;

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 100;

/// Model and input weight shared by value-function feedback laws.
#[derive(Clone, Debug)]
pub struct FeedbackContext {
    pub model: Arc<BilinearModel>,
    pub input_weight: DMatrix<f64>,
    pub input_weight_inv: DMatrix<f64>,
}

impl FeedbackContext {
    pub fn new(model: Arc<BilinearModel>, weights: &CostWeights) -> Self {
        Self {
            model,
            input_weight: weights.input.clone(),
            input_weight_inv: weights.input_inv.clone(),
        }
    }
}

#[derive(Clone)]
pub enum PolicyKind {
    Zero {
        m: usize,
    },
    /// Feedback of the original state `x = C z`.
    Analytic {
        name: String,
        n: usize,
        law: VectorField,
    },
    /// `u = −K z`.
    LinearGain {
        gain: DMatrix<f64>,
    },
    /// `u = −R⁻¹B(z)ᵀ∇V(z)`.
    Nominal {
        valuefn: Arc<GalerkinValueFn>,
        context: FeedbackContext,
    },
    /// Robust feedback. With a previous policy this is the explicit
    /// improvement step; without one the first-order condition is solved
    /// for `u` directly.
    Robust {
        valuefn: Arc<GalerkinValueFn>,
        context: FeedbackContext,
        c2: f64,
        rho_prime: f64,
        previous: Option<Arc<Policy>>,
    },
}

/// Linear feedback used inside a small ball around the origin.
#[derive(Clone, Debug)]
pub struct NearOriginSwitch {
    pub gain: DMatrix<f64>,
    pub radius: f64,
}

#[derive(Clone)]
pub struct Policy {
    pub kind: PolicyKind,
    pub near_origin: Option<NearOriginSwitch>,
}

impl fmt::Debug for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Policy({})", self.label())
    }
}

impl Policy {
    pub fn zero(m: usize) -> Self {
        Self::from_kind(PolicyKind::Zero { m })
    }

    pub fn analytic(name: impl Into<String>, n: usize, law: VectorField) -> Self {
        Self::from_kind(PolicyKind::Analytic {
            name: name.into(),
            n,
            law,
        })
    }

    pub fn linear_gain(gain: DMatrix<f64>) -> Self {
        Self::from_kind(PolicyKind::LinearGain { gain })
    }

    pub fn nominal(valuefn: Arc<GalerkinValueFn>, context: FeedbackContext) -> Self {
        Self::from_kind(PolicyKind::Nominal { valuefn, context })
    }

    pub fn robust(
        valuefn: Arc<GalerkinValueFn>,
        context: FeedbackContext,
        eb: &ErrorBound,
        rho_prime: f64,
        previous: Option<Arc<Policy>>,
    ) -> Self {
        Self::from_kind(PolicyKind::Robust {
            valuefn,
            context,
            c2: eb.c2,
            rho_prime,
            previous,
        })
    }

    fn from_kind(kind: PolicyKind) -> Self {
        Self {
            kind,
            near_origin: None,
        }
    }

    pub fn with_near_origin(mut self, gain: DMatrix<f64>, radius: f64) -> Self {
        self.near_origin = Some(NearOriginSwitch { gain, radius });
        self
    }

    pub fn label(&self) -> String {
        match &self.kind {
            PolicyKind::Zero { .. } => "zero".into(),
            PolicyKind::Analytic { name, .. } => format!("analytic:{name}"),
            PolicyKind::LinearGain { .. } => "linear-gain".into(),
            PolicyKind::Nominal { .. } => "nominal".into(),
            PolicyKind::Robust { previous: None, .. } => "robust-implicit".into(),
            PolicyKind::Robust { .. } => "robust-explicit".into(),
        }
    }

    pub fn valuefn(&self) -> Option<&Arc<GalerkinValueFn>> {
        match &self.kind {
            PolicyKind::Nominal { valuefn, .. } | PolicyKind::Robust { valuefn, .. } => {
                Some(valuefn)
            }
            _ => None,
        }
    }

    /// Control at lifted state `z`.
    pub fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        if let Some(switch) = &self.near_origin {
            if z.norm() < switch.radius {
                return -(&switch.gain * z);
            }
        }
        self.eval_core(z)
    }

    fn eval_core(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            PolicyKind::Zero { m } => DVector::zeros(*m),
            PolicyKind::Analytic { n, law, .. } => law(&z.rows(0, *n).into_owned()),
            PolicyKind::LinearGain { gain } => -(gain * z),
            PolicyKind::Nominal { valuefn, context } => {
                let p = valuefn.gradient(z);
                nominal_control(&context.model.input_map(z), &p, &context.input_weight_inv)
            }
            PolicyKind::Robust {
                valuefn,
                context,
                c2,
                rho_prime,
                previous,
            } => {
                let p = valuefn.gradient(z);
                let b = context.model.input_map(z).transpose() * &p;
                match previous {
                    Some(_) if *c2 == 0.0 => {
                        nominal_control(&context.model.input_map(z), &p, &context.input_weight_inv)
                    }
                    Some(prev) => {
                        let u_prev = prev.eval(z);
                        improved_control(
                            &b,
                            p.norm(),
                            &u_prev,
                            &context.input_weight_inv,
                            *c2,
                            *rho_prime,
                        )
                    }
                    None => solve_first_order_condition(&b, p.norm(), context, *c2, *rho_prime)
                        .unwrap_or_else(|_| {
                            floor_control(&b, &context.input_weight_inv, *rho_prime)
                        }),
                }
            }
        }
    }
}

/// `−R⁻¹B(z)ᵀp`.
pub fn nominal_control(
    input_map: &DMatrix<f64>,
    p: &DVector<f64>,
    input_weight_inv: &DMatrix<f64>,
) -> DVector<f64> {
    -(input_weight_inv * (input_map.transpose() * p))
}

/// Control of norm ρ′ along the nominal direction, or zero when that
/// direction vanishes.
pub fn floor_control(
    b: &DVector<f64>,
    input_weight_inv: &DMatrix<f64>,
    rho_prime: f64,
) -> DVector<f64> {
    let nominal = -(input_weight_inv * b);
    let norm = nominal.norm();
    if norm == 0.0 {
        nominal
    } else {
        nominal * (rho_prime / norm)
    }
}

/// Explicit policy-improvement step
/// `u = −R⁻¹b − c2‖p‖/‖u_prev‖ R⁻¹u_prev` with `b = B(z)ᵀp`.
///
/// Where the robust term dominates (|b| below c2‖p‖ in the scalar case) the
/// update would flip sign on every iteration; there the control is held at
/// norm ρ′ along the nominal direction.
pub fn improved_control(
    b: &DVector<f64>,
    grad_norm: f64,
    u_prev: &DVector<f64>,
    input_weight_inv: &DMatrix<f64>,
    c2: f64,
    rho_prime: f64,
) -> DVector<f64> {
    let nominal = -(input_weight_inv * b);
    if c2 == 0.0 {
        return nominal;
    }
    let s_prev = u_prev.norm().max(rho_prime);
    let u = &nominal - input_weight_inv * u_prev * (c2 * grad_norm / s_prev);
    if u.dot(&nominal) <= 0.0 || u.norm() < rho_prime {
        floor_control(b, input_weight_inv, rho_prime)
    } else {
        u
    }
}

fn implicit_map(
    b: &DVector<f64>,
    kappa: f64,
    s: f64,
    context: &FeedbackContext,
) -> Result<DVector<f64>> {
    let m = b.len();
    let lhs = &context.input_weight + DMatrix::identity(m, m) * (kappa / s);
    let chol = lhs
        .cholesky()
        .ok_or(Error::Singular("implicit robust control"))?;
    Ok(-chol.solve(b))
}

/// Solves `u = −(R + (c2‖p‖/‖u‖) I)⁻¹ b` for `u` by fixed-point iteration on
/// `s = ‖u‖`, falling back to bisection on `[ρ′, s0]`.
fn solve_first_order_condition(
    b: &DVector<f64>,
    grad_norm: f64,
    context: &FeedbackContext,
    c2: f64,
    rho_prime: f64,
) -> Result<DVector<f64>> {
    let nominal = -(&context.input_weight_inv * b);
    let s0 = nominal.norm();
    let kappa = c2 * grad_norm;
    if kappa == 0.0 || s0 == 0.0 {
        return Ok(nominal);
    }
    let mut s = s0;
    let mut history = Vec::new();
    for _ in 0..FIXED_POINT_MAX_ITER {
        let u = implicit_map(b, kappa, s, context)?;
        let next = u.norm();
        history.push(next);
        if (next - s).abs() < FIXED_POINT_TOL && next >= rho_prime {
            return Ok(u);
        }
        s = next;
        if s < rho_prime {
            break;
        }
    }
    // φ(s) = s − ‖u(s)‖ is positive at s0; a root above ρ′ needs φ(ρ′) < 0.
    let phi = |s: f64| -> Result<f64> { Ok(s - implicit_map(b, kappa, s, context)?.norm()) };
    let (mut lo, mut hi) = (rho_prime, s0);
    if rho_prime >= s0 || phi(lo)? >= 0.0 {
        return Err(Error::NotConverged {
            what: "implicit robust control",
            iterations: history.len(),
            history,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < FIXED_POINT_TOL * hi.max(1.0) {
            break;
        }
    }
    implicit_map(b, kappa, 0.5 * (lo + hi), context)
}

/// Robust control from the implicit first-order condition at `z` for
/// value gradient `grad_v`.
pub fn implicit_robust_control(
    z: &DVector<f64>,
    grad_v: &DVector<f64>,
    model: &BilinearModel,
    weights: &CostWeights,
    eb: &ErrorBound,
    rho_prime: f64,
) -> Result<DVector<f64>> {
    let grad_norm = grad_v.norm();
    if grad_norm == 0.0 {
        return Err(Error::InvalidArgument(
            "implicit robust control needs a nonzero gradient".into(),
        ));
    }
    let context = FeedbackContext {
        model: Arc::new(model.clone()),
        input_weight: weights.input.clone(),
        input_weight_inv: weights.input_inv.clone(),
    };
    let b = model.input_map(z).transpose() * grad_v;
    solve_first_order_condition(&b, grad_norm, &context, eb.c2, rho_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::StateBox;
    use approx::assert_relative_eq;

    fn scalar_context() -> (BilinearModel, CostWeights) {
        let model = BilinearModel::linear(
            DMatrix::from_element(1, 1, -1.0),
            DMatrix::from_element(1, 1, 1.0),
            "scalar",
        )
        .unwrap();
        let weights =
            CostWeights::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1), 1).unwrap();
        (model, weights)
    }

    fn eb_with_c2(c2: f64) -> ErrorBound {
        ErrorBound::new(0.0, c2, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn improvement_scalar_example() {
        let b = DVector::from_element(1, 2.0);
        let u = improved_control(
            &b,
            2.0,
            &DVector::from_element(1, 1.0),
            &DMatrix::identity(1, 1),
            0.5,
            1e-3,
        );
        assert_relative_eq!(u[0], -3.0, epsilon = 1e-15);
    }

    #[test]
    fn improvement_without_c2_is_nominal() {
        let b = DVector::from_vec(vec![0.3, -1.0]);
        let r_inv = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        let u = improved_control(
            &b,
            4.0,
            &DVector::from_vec(vec![1.0, 1.0]),
            &r_inv,
            0.0,
            1e-3,
        );
        assert_eq!(u, -(&r_inv * &b));
    }

    #[test]
    fn improvement_with_zero_gradient_is_zero() {
        let b = DVector::zeros(1);
        let u = improved_control(
            &b,
            0.0,
            &DVector::from_element(1, 1.0),
            &DMatrix::identity(1, 1),
            0.5,
            1e-3,
        );
        assert_eq!(u, DVector::zeros(1));
    }

    #[test]
    fn improvement_in_dead_zone_holds_floor() {
        let b = DVector::from_element(1, 0.2);
        let mut u = DVector::from_element(1, -1.0);
        for _ in 0..5 {
            u = improved_control(&b, 1.0, &u, &DMatrix::identity(1, 1), 0.5, 1e-3);
            assert_relative_eq!(u[0], -1e-3, epsilon = 1e-18);
        }
    }

    #[test]
    fn implicit_scalar_example() {
        let (model, weights) = scalar_context();
        // B(z) = 1 and ∇V = 2 give b = 2 and c2‖∇V‖ = 0.5 with c2 = 0.25.
        let u = implicit_robust_control(
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 2.0),
            &model,
            &weights,
            &eb_with_c2(0.25),
            1e-3,
        )
        .unwrap();
        assert_relative_eq!(u[0], -1.5, epsilon = 1e-9);
    }

    #[test]
    fn implicit_without_c2_is_nominal() {
        let (model, weights) = scalar_context();
        let u = implicit_robust_control(
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 2.0),
            &model,
            &weights,
            &eb_with_c2(0.0),
            1e-3,
        )
        .unwrap();
        assert_eq!(u[0], -2.0);
    }

    #[test]
    fn implicit_reports_dead_zone() {
        let (model, weights) = scalar_context();
        let r = implicit_robust_control(
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 0.4),
            &model,
            &weights,
            &eb_with_c2(2.0),
            1e-3,
        );
        assert!(r.is_err());
    }

    #[test]
    fn implicit_solution_satisfies_first_order_condition() {
        let n = 3;
        let model = BilinearModel::new(
            DMatrix::from_fn(
                n,
                n,
                |i, j| if i == j { -1.0 } else { 0.1 * (i + j) as f64 },
            ),
            DMatrix::from_fn(n, 2, |i, j| 1.0 + 0.3 * i as f64 - 0.5 * j as f64),
            vec![DMatrix::from_fn(n, n, |i, j| 0.05 * (i as f64 - j as f64)); 2],
            "t",
        )
        .unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let weights = CostWeights::new(DMatrix::identity(1, 1), r.clone(), n).unwrap();
        let eb = eb_with_c2(0.2);
        let z = DVector::from_vec(vec![0.5, -0.2, 0.1]);
        let p = DVector::from_vec(vec![1.0, 2.0, -0.5]);
        let u = implicit_robust_control(&z, &p, &model, &weights, &eb, 1e-3).unwrap();
        let s = u.norm();
        let rhs = -(r + DMatrix::identity(2, 2) * (eb.c2 * p.norm() / s))
            .try_inverse()
            .unwrap()
            * (model.input_map(&z).transpose() * &p);
        assert!((rhs - &u).norm() < 1e-8);
    }

    #[test]
    fn near_origin_switch_uses_gain() {
        let basis = vec![vec![2u32]];
        let valuefn = Arc::new(
            GalerkinValueFn::new(
                basis,
                DVector::from_element(1, 1.0),
                StateBox::symmetric(1, 1.0).unwrap(),
            )
            .unwrap(),
        );
        let (model, weights) = scalar_context();
        let policy = Policy::nominal(valuefn, FeedbackContext::new(Arc::new(model), &weights))
            .with_near_origin(DMatrix::from_element(1, 1, 7.0), 0.1);
        assert_relative_eq!(policy.eval(&DVector::from_element(1, 0.05))[0], -0.35);
        // ∇V = 2z and B = 1 give u = −2z outside the ball.
        assert_relative_eq!(policy.eval(&DVector::from_element(1, 0.5))[0], -1.0);
    }
}
