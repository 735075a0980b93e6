//! Robust optimal control from Koopman bilinear surrogates: lifting,
//! simulation, identification with error bounds, and a robust
//! Hamilton–Jacobi policy-iteration solver.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod domain;
pub mod error;
pub mod fingerprint;
pub mod hjsolve;
pub mod identify;
pub mod lifting;
pub mod linalg;
pub mod monomial;
pub mod pipeline;
pub(crate) mod serde_matrix;
pub mod simulate;

pub use error::{Error, Result};
