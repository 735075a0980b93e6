use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::StateBox;
use crate::error::{Error, Result};
use crate::fingerprint::sha256_hex;
use crate::hjsolve::SolverConfig;
use crate::lifting::DEFAULT_GRID_INTERVALS;
use crate::serde_matrix;
use crate::simulate::{CollectionPlan, CostWeights, Excitation, NoiseSignal, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(with = "serde_matrix::rows")]
    pub state: DMatrix<f64>,
    #[serde(with = "serde_matrix::rows")]
    pub input: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryConfig {
    pub max_degree: u32,
    pub domain: StateBox,
    #[serde(default = "default_grid_intervals")]
    pub lipschitz_grid_intervals: usize,
}

fn default_grid_intervals() -> usize {
    DEFAULT_GRID_INTERVALS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollectionConfig {
    #[serde(flatten)]
    pub plan: CollectionPlan,
    pub excitation: Excitation,
    pub noise: NoiseSignal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationConfig {
    #[serde(default = "default_lp_weights")]
    pub lp_weights: [f64; 2],
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
}

fn default_lp_weights() -> [f64; 2] {
    [1.0, 1.0]
}

fn default_rank_tol() -> f64 {
    crate::identify::DEFAULT_RANK_TOL
}

/// Construction of the noise energy bound `ΔΔᵀ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRule {
    /// `Δ = √T · sup‖d̄‖ · L_p · I_N` from the configured noise signal.
    JacobianBound,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseEnvelopeConfig {
    pub rule: NoiseRule,
    /// Use the noise-inflated coefficients in the solver instead of the LP
    /// coefficients.
    #[serde(default)]
    pub fold_into_solver: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    pub initial_states: Vec<Vec<f64>>,
    pub horizon: f64,
    /// Step for the cost table on the true plant.
    pub step: f64,
    /// Step for the bound and trade-off simulations.
    pub analysis_step: f64,
    /// Radius of the linear-gain switch around the origin; defaults to ρ.
    #[serde(default)]
    pub near_origin_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: String,
    pub seed: u64,
    pub weights: WeightsConfig,
    pub dictionary: DictionaryConfig,
    pub collection: CollectionConfig,
    #[serde(default = "default_identification")]
    pub identification: IdentificationConfig,
    pub noise_envelope: NoiseEnvelopeConfig,
    pub solver: SolverConfig,
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_identification() -> IdentificationConfig {
    IdentificationConfig {
        lp_weights: default_lp_weights(),
        rank_tol: default_rank_tol(),
    }
}

/// Independent random streams derived from the experiment seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Collection = 1,
    Collocation = 2,
    Probe = 3,
    MonteCarlo = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dictionary.domain.dim();
        if self.weights.state.nrows() != n {
            return Err(Error::Config(format!(
                "state weight is {}x{}, plant dimension {n}",
                self.weights.state.nrows(),
                self.weights.state.ncols()
            )));
        }
        if self.collection.plan.initial_box.dim() != n || self.solver.domain.dim() != n {
            return Err(Error::Config(
                "collection and solver boxes must match the state dimension".into(),
            ));
        }
        if self.collection.excitation.amplitudes.len()
            != self.collection.excitation.frequencies_hz.len()
        {
            return Err(Error::Config(
                "excitation amplitudes and frequencies differ in length".into(),
            ));
        }
        if self.evaluation.initial_states.iter().any(|x| x.len() != n) {
            return Err(Error::Config(
                "initial state has the wrong dimension".into(),
            ));
        }
        if !(self.evaluation.horizon > 0.0
            && self.evaluation.step > 0.0
            && self.evaluation.analysis_step > 0.0)
        {
            return Err(Error::Config(
                "evaluation horizon and steps must be positive".into(),
            ));
        }
        if self.dictionary.max_degree == 0 || self.dictionary.lipschitz_grid_intervals == 0 {
            return Err(Error::Config(
                "dictionary degree and grid must be positive".into(),
            ));
        }
        self.dictionary.domain.validate()?;
        self.solver.validate()?;
        Ok(())
    }

    /// Hash of every setting that influences results; the output directory
    /// is excluded.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_dir: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        sha256_hex(&json)
    }

    pub fn cost_weights(&self, lifted_dim: usize) -> Result<CostWeights> {
        CostWeights::new(
            self.weights.state.clone(),
            self.weights.input.clone(),
            lifted_dim,
        )
    }

    pub fn initial_states(&self) -> Vec<DVector<f64>> {
        self.evaluation
            .initial_states
            .iter()
            .map(|x| DVector::from_vec(x.clone()))
            .collect()
    }

    pub fn cost_sim(&self) -> SimConfig {
        SimConfig::new(self.evaluation.horizon, self.evaluation.step)
    }

    pub fn analysis_sim(&self) -> SimConfig {
        SimConfig::new(self.evaluation.horizon, self.evaluation.analysis_step)
    }

    pub fn near_origin_radius(&self) -> f64 {
        self.evaluation
            .near_origin_radius
            .unwrap_or(self.solver.rho)
    }

    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        stream_rng(self.seed, stream)
    }
}
