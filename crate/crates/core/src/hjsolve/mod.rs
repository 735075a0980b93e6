pub mod lqr;
pub mod policy;
pub mod solver;
pub mod valuefn;

pub use lqr::{fit_lti, lqr_for_model, lqr_lti_baseline, LqrBaseline};
pub use policy::{
    floor_control, implicit_robust_control, improved_control, nominal_control, FeedbackContext,
    NearOriginSwitch, Policy, PolicyKind,
};
pub use solver::{
    build_basis, delta_term, fit_initial_value, gauss_newton, hamiltonian, policy_evaluation,
    policy_improvement, probe_points, run_policy_iteration, sample_collocation_points,
    solve_nominal, Collocation, ConvergenceLog, EvaluationOutcome, IterationRecord, IterationSetup,
    PolicyIterationResult, SolverConfig,
};
pub use valuefn::{prune_basis, GalerkinValueFn};
