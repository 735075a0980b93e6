use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("regressor matrix has rank {rank} < {required}; singular values {singular_values:?}")]
    RankDeficient {
        rank: usize,
        required: usize,
        singular_values: Vec<f64>,
    },

    #[error("error-bound LP infeasible: sample {sample} has zero state and input but residual norm {residual:e}")]
    Infeasible { sample: usize, residual: f64 },

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),

    #[error("matrix is singular or not positive definite in {0}")]
    Singular(&'static str),

    #[error("{what} did not converge within {iterations} iterations; history {history:?}")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("initial policy is not admissible: probe simulation from {0:?} diverged")]
    Inadmissible(Vec<f64>),

    #[error("no stabilizing gain found: {0}")]
    Unstabilizable(String),

    #[error("trajectory diverged at t = {0}")]
    Divergent(f64),

    #[error("unknown plant `{0}`")]
    UnknownPlant(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing prerequisite artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("{} was produced by config {found}, current config is {expected}", .path.display())]
    StaleArtifact {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], context: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}
