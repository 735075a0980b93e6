//! Plant and lifted-model simulation, data collection and cost accumulation.

pub mod collect;
pub mod plant;
pub mod trajectory;
pub mod weights;

pub use collect::{
    collect_data, read_samples_csv, write_samples_csv, CollectionPlan, Excitation, NoiseSignal,
    Sample,
};
pub use plant::{AnalyticSolution, Plant, BENCHMARK};
pub use trajectory::{
    integrate, integrate_lifted, worst_case_error, ErrorFn, SimConfig, Trajectory,
    DEFAULT_DIVERGENCE_CAP, DEFAULT_GRADIENT_FLOOR,
};
pub use weights::CostWeights;
