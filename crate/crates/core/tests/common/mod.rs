//! Helpers shared by the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use koopman_robust::domain::StateBox;
use koopman_robust::hjsolve::{
    run_policy_iteration, Collocation, GalerkinValueFn, IterationSetup, Policy,
    PolicyIterationResult, SolverConfig,
};
use koopman_robust::identify::{
    build_data_matrices, noise_coefficient, BilinearModel, ConsistencySet, DataBatch, ErrorBound,
};
use koopman_robust::lifting::Dictionary;
use koopman_robust::monomial::graded_lex;
use koopman_robust::simulate::{integrate, CostWeights, Plant, Sample, SimConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_model(rng: &mut ChaCha8Rng, n: usize, m: usize) -> BilinearModel {
    let bilinear = (0..m).map(|_| gaussian(rng, n, n) * 0.3).collect();
    BilinearModel::new(
        gaussian(rng, n, n),
        gaussian(rng, n, m),
        bilinear,
        "synthetic",
    )
    .unwrap()
}

/// Degree-one dictionary, so the lifted state is the state itself and the
/// samples of a bilinear system are exactly bilinear in lifted coordinates.
pub fn identity_dictionary(n: usize) -> Dictionary {
    Dictionary::monomials(n, 1, StateBox::symmetric(n, 1.0).unwrap()).unwrap()
}

pub fn synthetic_batch(rng: &mut ChaCha8Rng, model: &BilinearModel, samples: usize) -> DataBatch {
    let (n, m) = (model.lifted_dim, model.m);
    let samples: Vec<Sample> = (0..samples)
        .map(|j| {
            let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let u = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let xdot = model.vector_field(&x, &u);
            Sample {
                t: j as f64,
                x,
                u,
                xdot,
            }
        })
        .collect();
    build_data_matrices(&samples, &identity_dictionary(n), 1e-10).unwrap()
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

pub struct LinearProblem {
    pub model: Arc<BilinearModel>,
    pub weights: CostWeights,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

pub fn linear_problem() -> LinearProblem {
    let a = DMatrix::from_row_slice(3, 3, &[-1.0, 2.0, 0.0, 0.0, -0.5, 1.0, 0.3, 0.0, -2.0]);
    let b = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 0.0, 0.5, 0.5]);
    let q = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 1.5]);
    let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
    LinearProblem {
        model: Arc::new(BilinearModel::linear(a.clone(), b.clone(), "linear").unwrap()),
        weights: CostWeights::new(q.clone(), r.clone(), 3).unwrap(),
        a,
        b,
        q,
        r,
    }
}

/// Steady state of `Ṗ = AᵀP + PA − PBR⁻¹BᵀP + Q` from `P = 0`.
pub fn riccati_by_integration(p: &LinearProblem) -> DMatrix<f64> {
    let s = &p.b * p.r.clone().try_inverse().unwrap() * p.b.transpose();
    let rhs = |x: &DMatrix<f64>| p.a.transpose() * x + x * &p.a - x * &s * x + &p.q;
    let h = 1e-3;
    let mut x = DMatrix::zeros(3, 3);
    for _ in 0..40_000 {
        let k1 = rhs(&x);
        let k2 = rhs(&(&x + &k1 * (h / 2.0)));
        let k3 = rhs(&(&x + &k2 * (h / 2.0)));
        let k4 = rhs(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    assert!(rhs(&x).norm() < 1e-10);
    x
}

pub fn random_points(rng: &mut ChaCha8Rng, count: usize, half_width: f64) -> Vec<DVector<f64>> {
    (0..count)
        .map(|_| DVector::from_fn(3, |_, _| rng.random_range(-half_width..half_width)))
        .collect()
}

pub fn solve(
    p: &LinearProblem,
    cfg: &SolverConfig,
) -> (PolicyIterationResult, Collocation, GalerkinValueFn) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let template =
        GalerkinValueFn::zeros(graded_lex(3, 2, 2), StateBox::symmetric(3, 1.0).unwrap()).unwrap();
    let colloc = Collocation::new(
        random_points(&mut rng, 300, 1.0),
        &template,
        &p.model,
        &p.weights,
    )
    .unwrap();
    let probe = random_points(&mut rng, 40, 1.0);
    let setup = IterationSetup {
        colloc: &colloc,
        probe: &probe,
        epsilon: 0.0,
    };
    let result = run_policy_iteration(
        &p.model,
        &p.weights,
        &ErrorBound::zero(),
        cfg,
        Arc::new(Policy::zero(2)),
        &template,
        &setup,
    )
    .unwrap();
    (result, colloc, template)
}

pub fn config() -> SolverConfig {
    SolverConfig {
        nu: 1e-8,
        ..SolverConfig::default()
    }
}

pub fn end_state(
    plant: &Plant,
    policy: &Policy,
    dict: &Dictionary,
    x0: &DVector<f64>,
    step: f64,
) -> DVector<f64> {
    let weights = CostWeights::new(
        DMatrix::identity(2, 2),
        DMatrix::identity(1, 1),
        dict.lifted_dim(),
    )
    .unwrap();
    let traj = integrate(
        plant,
        policy,
        dict,
        x0,
        &SimConfig::new(2.0, step),
        &weights,
    )
    .unwrap();
    traj.states.last().unwrap().clone()
}

/// Ratio of end-state errors at steps `h` and `h/2` against an `h/16`
/// reference, for the benchmark under its optimal policy.
pub fn rk4_error_ratio(x0: &DVector<f64>, h: f64) -> f64 {
    let plant = Plant::benchmark();
    let dict = Dictionary::monomials(2, 3, StateBox::symmetric(2, 1.5).unwrap()).unwrap();
    let policy = Policy::analytic("u*", 2, plant.analytic().unwrap().control.clone());
    let reference = end_state(&plant, &policy, &dict, x0, h / 16.0);
    let coarse = (end_state(&plant, &policy, &dict, x0, h) - &reference).norm();
    let fine = (end_state(&plant, &policy, &dict, x0, h / 2.0) - &reference).norm();
    coarse / fine
}

/// Recovery error and relative residual orthogonality `‖R W0ᵀ‖` for a
/// noise-free random bilinear system.
pub fn recovery_errors(n: usize, m: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = random_model(&mut rng, n, m);
    let batch = synthetic_batch(&mut rng, &truth, 4 * (n + m + m * n) + 10);
    let fit = koopman_robust::identify::edmd_fit(&batch).unwrap();
    let err = (fit.model.stacked() - truth.stacked()).norm();
    let ortho = (&fit.residual * batch.regressor.transpose()).norm()
        / (batch.derivatives.norm() * batch.regressor.norm());
    (err, ortho)
}

/// Noisy data `Z1 = M W0 + Δ S` with `‖S‖₂ ≤ 1`; counts draws whose true
/// coefficients lie in the consistency set built from `Δ`.
pub fn membership_passes(seed: u64, draws: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m, t) = (3, 1, 80);
    let mut passes = 0;
    for _ in 0..draws {
        let truth = random_model(&mut rng, n, m);
        let mut batch = synthetic_batch(&mut rng, &truth, t);
        let delta = gaussian(&mut rng, n, n) * 0.2;
        let s = gaussian(&mut rng, n, t);
        let s = &s / (spectral_norm(&s) * rng.random_range(1.0..2.0));
        batch.derivatives += &delta * s;
        let env = noise_coefficient(&batch, &delta, 1.0).unwrap();
        let set = ConsistencySet::new(&batch, &env).unwrap();
        if set
            .membership(&truth.stacked().transpose(), 1e-9)
            .unwrap()
            .member
        {
            passes += 1;
        }
    }
    passes
}

/// Counts draws of consistent model perturbations whose vector-field error
/// stays within `c_d(‖z‖ + ‖u‖ + ‖z‖‖u‖)`.
pub fn noise_bound_passes(seed: u64, draws: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = (3, 2);
    let truth = random_model(&mut rng, n, m);
    let batch = synthetic_batch(&mut rng, &truth, 100);
    let delta = gaussian(&mut rng, n, n) * 0.3;
    let env = noise_coefficient(&batch, &delta, 1.0).unwrap();
    let set = ConsistencySet::new(&batch, &env).unwrap();
    let k = batch.regressor_dim();
    (0..draws)
        .filter(|_| {
            let gamma = gaussian(&mut rng, k, n);
            let gamma = &gamma / (spectral_norm(&gamma) * rng.random_range(1.0..3.0));
            let pert = BilinearModel::from_stacked(&set.perturbation_from_unit(&gamma), m, "delta")
                .unwrap();
            let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal) * 2.0);
            let u = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = pert.vector_field(&z, &u).norm();
            r <= env.c_d * (z.norm() + u.norm() + z.norm() * u.norm()) * (1.0 + 1e-12)
        })
        .count()
}

/// Largest relative gradient error and Laplacian error of a random quartic
/// value function against finite differences over `count` points.
pub fn galerkin_fd_errors(seed: u64, count: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = graded_lex(4, 1, 4);
    let theta = DVector::from_fn(basis.len(), |_, _| rng.random_range(-1.0..1.0));
    let v = GalerkinValueFn::new(basis, theta, StateBox::symmetric(4, 2.0).unwrap()).unwrap();
    let (mut grad_err, mut lap_err) = (0.0_f64, 0.0_f64);
    for _ in 0..count {
        let z = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
        let f0 = v.value(&z);
        let (h, hh) = (1e-5, 1e-4);
        let mut fd = DVector::zeros(4);
        let mut trace = 0.0;
        for k in 0..4 {
            let shifted = |d: f64| {
                let mut zs = z.clone();
                zs[k] += d;
                v.value(&zs)
            };
            fd[k] = (shifted(h) - shifted(-h)) / (2.0 * h);
            trace += (shifted(hh) - 2.0 * f0 + shifted(-hh)) / (hh * hh);
        }
        let grad = v.gradient(&z);
        grad_err = grad_err.max((&fd - &grad).norm() / grad.norm().max(1.0));
        let lap = v.laplacian(&z);
        lap_err = lap_err.max((trace - lap).abs() / lap.abs().max(1.0));
    }
    (grad_err, lap_err)
}

/// Largest coefficient gap between the converged solver and `½zᵀPz` from
/// the Riccati oracle on the linear test problem.
pub fn lqr_equivalence_error() -> f64 {
    let p = linear_problem();
    let riccati = riccati_by_integration(&p);
    let (result, _, _) = solve(&p, &config());
    assert!(result.log.converged);
    let v = &result.valuefn;
    v.basis
        .iter()
        .enumerate()
        .map(|(k, alpha)| {
            let idx: Vec<usize> = alpha
                .iter()
                .enumerate()
                .flat_map(|(i, &e)| std::iter::repeat_n(i, e as usize))
                .collect();
            let expected = if idx[0] == idx[1] {
                0.5 * riccati[(idx[0], idx[0])]
            } else {
                riccati[(idx[0], idx[1])]
            };
            (v.theta[k] - expected).abs()
        })
        .fold(0.0, f64::max)
}
