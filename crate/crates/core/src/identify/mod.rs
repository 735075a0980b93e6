//! Bilinear EDMD identification, error-bound estimation and noise envelopes.

pub mod bounds;
pub mod data;
pub mod model;
pub mod noise;

pub use bounds::{
    estimate_error_bounds, residual_norms, solve_bound_lp, ErrorCoefficients, ResidualNorms,
};
pub use data::{
    build_data_matrices, edmd_fit, pseudo_inverse, DataBatch, EdmdFit, DEFAULT_RANK_TOL,
};
pub use model::{BilinearModel, ErrorBound};
pub use noise::{
    consistency_membership, fold_noise_into_bound, jacobian_noise_factor, noise_coefficient,
    noise_coefficient_from_energy, ConsistencySet, Membership, NoiseEnvelope,
};
