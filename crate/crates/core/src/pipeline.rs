//! Stage runner persisting every intermediate artifact under one output
//! directory. Each artifact carries the hash of the config that made it.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    cost_table, deviation_report, tradeoff_report, Controllers, CostReport, DeviationReport,
    TradeoffReport,
};
use crate::config::{ExperimentConfig, NoiseRule, Stream};
use crate::domain::StateBox;
use crate::error::{Error, Result};
use crate::fingerprint::sha256_hex;
use crate::hjsolve::{
    build_basis, fit_initial_value, lqr_lti_baseline, probe_points, run_policy_iteration,
    sample_collocation_points, solve_nominal, Collocation, ConvergenceLog, FeedbackContext,
    GalerkinValueFn, IterationSetup, Policy,
};
use crate::identify::{
    build_data_matrices, edmd_fit, estimate_error_bounds, fold_noise_into_bound,
    jacobian_noise_factor, noise_coefficient, BilinearModel, DataBatch, ErrorBound,
    ErrorCoefficients, NoiseEnvelope,
};
use crate::lifting::Dictionary;
use crate::serde_matrix;
use crate::simulate::{
    collect_data, read_samples_csv, write_samples_csv, Plant, Sample, SimConfig,
};

pub const FAILED_MARKER: &str = "FAILED";
const HASH_PREFIX: &str = "# config_hash=";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Collect = 1,
    Fit = 2,
    Bound = 3,
    Solve = 4,
    Evaluate = 5,
    Report = 6,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Collect,
        Stage::Fit,
        Stage::Bound,
        Stage::Solve,
        Stage::Evaluate,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Collect => "collect",
            Stage::Fit => "fit",
            Stage::Bound => "bound",
            Stage::Solve => "solve",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }

    /// `10 + k` for the k-th stage.
    pub fn exit_code(self) -> i32 {
        10 + self as i32
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// Exit code for failures before any stage runs.
pub const CONFIG_EXIT_CODE: i32 = 10;

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Run only this stage against persisted prerequisites.
    pub stage: Option<Stage>,
    pub nominal_only: bool,
}

/// Artifact body stamped with the config hash.
#[derive(Serialize, Deserialize)]
pub struct Artifact<T> {
    pub config_hash: String,
    #[serde(flatten)]
    pub body: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplesManifest {
    pub samples: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub sample_dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    #[serde(flatten)]
    pub model: BilinearModel,
    pub model_ref: String,
    pub residual_frobenius: f64,
    pub condition_number: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LqrArtifact {
    #[serde(rename = "A", with = "serde_matrix::rows")]
    pub drift: DMatrix<f64>,
    #[serde(rename = "B0", with = "serde_matrix::rows")]
    pub input: DMatrix<f64>,
    #[serde(rename = "P", with = "serde_matrix::rows")]
    pub riccati: DMatrix<f64>,
    #[serde(rename = "K", with = "serde_matrix::rows")]
    pub gain: DMatrix<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundsArtifact {
    pub lp: ErrorCoefficients,
    pub bound: ErrorBound,
    pub noise: Option<NoiseEnvelope>,
    pub folded: Option<ErrorBound>,
    /// Bound handed to the solver.
    pub solver_bound: ErrorBound,
    pub solver_bound_source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueFnArtifact {
    #[serde(flatten)]
    pub valuefn: GalerkinValueFn,
    pub model_ref: String,
    pub epsilon: f64,
    pub iterations: usize,
    pub converged: bool,
    pub near_origin_radius: f64,
}

/// Robust and nominal controllers rebuilt from persisted artifacts.
pub struct ShippedControllers {
    pub nominal: Policy,
    pub nominal_valuefn: Arc<GalerkinValueFn>,
    pub robust: Policy,
    pub robust_valuefn: Arc<GalerkinValueFn>,
    pub baseline: Policy,
    pub actual: Option<Policy>,
}

pub struct Pipeline {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub out: PathBuf,
    pub plant: Plant,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig, out: PathBuf) -> Result<Self> {
        config.validate()?;
        let plant = Plant::by_name(&config.plant)?;
        if plant.n != config.dictionary.domain.dim() || plant.m != config.weights.input.nrows() {
            return Err(Error::Config(format!(
                "plant `{}` has n = {}, m = {}; config dimensions differ",
                plant.name, plant.n, plant.m
            )));
        }
        fs::create_dir_all(&out)?;
        Ok(Self {
            config_hash: config.hash(),
            config,
            out,
            plant,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Runs the requested stages; on failure leaves a `FAILED` marker next
    /// to the partial artifacts.
    pub fn run(&self, opts: RunOptions) -> std::result::Result<(), StageError> {
        let marker = self.path(FAILED_MARKER);
        if marker.exists() {
            let _ = fs::remove_file(&marker);
        }
        let stages: Vec<Stage> = match (opts.stage, opts.nominal_only) {
            (Some(s), _) => vec![s],
            (None, true) => vec![Stage::Collect, Stage::Fit, Stage::Solve],
            (None, false) => Stage::ALL.to_vec(),
        };
        for stage in stages {
            log::info!("stage {stage}");
            let result = match stage {
                Stage::Collect => self.collect(),
                Stage::Fit => self.fit(),
                Stage::Bound => self.bound(),
                Stage::Solve => self.solve(opts.nominal_only),
                Stage::Evaluate => self.evaluate(),
                Stage::Report => self.report().map(|_| ()),
            };
            if let Err(source) = result {
                let _ = fs::write(&marker, format!("stage: {stage}\nerror: {source}\n"));
                return Err(StageError { stage, source });
            }
        }
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<()> {
        let artifact = Artifact {
            config_hash: self.config_hash.clone(),
            body,
        };
        let mut text = serde_json::to_string_pretty(&artifact)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let artifact: Artifact<T> = serde_json::from_str(&fs::read_to_string(&path)?)?;
        self.check_hash(&path, &artifact.config_hash)?;
        Ok(artifact.body)
    }

    fn check_hash(&self, path: &Path, found: &str) -> Result<()> {
        if found != self.config_hash {
            return Err(Error::StaleArtifact {
                path: path.to_path_buf(),
                found: found.to_string(),
                expected: self.config_hash.clone(),
            });
        }
        Ok(())
    }

    fn write_csv(&self, name: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = format!("{HASH_PREFIX}{}\n", self.config_hash).into_bytes();
        write(&mut buf)?;
        fs::write(self.path(name), buf)?;
        Ok(())
    }

    /// CSV body after the hash line.
    fn read_csv(&self, name: &str) -> Result<String> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::MissingArtifact(path));
        }
        let text = fs::read_to_string(&path)?;
        let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
        let found = first
            .strip_prefix(HASH_PREFIX)
            .ok_or_else(|| Error::Config(format!("{} lacks a config hash line", path.display())))?;
        self.check_hash(&path, found)?;
        Ok(rest.to_string())
    }

    pub fn dictionary(&self) -> Result<Dictionary> {
        let mut dict = Dictionary::monomials(
            self.plant.n,
            self.config.dictionary.max_degree,
            self.config.dictionary.domain.clone(),
        )?;
        let domain = self.config.dictionary.domain.clone();
        dict.estimate_lipschitz(&domain, self.config.dictionary.lipschitz_grid_intervals)?;
        Ok(dict)
    }

    pub fn collect(&self) -> Result<()> {
        let c = &self.config.collection;
        c.excitation.validate()?;
        let mut rng = self.config.rng(Stream::Collection);
        let samples = collect_data(&self.plant, &c.excitation, &c.noise, &c.plan, &mut rng)?;
        self.write_csv("samples.csv", |buf| write_samples_csv(&samples, buf))?;
        self.write_json(
            "samples_manifest.json",
            &SamplesManifest {
                samples: samples.len(),
                state_dim: self.plant.n,
                input_dim: self.plant.m,
                sample_dt: c.plan.sample_dt,
            },
        )
    }

    pub fn samples(&self) -> Result<Vec<Sample>> {
        let manifest: SamplesManifest = self.read_json("samples_manifest.json")?;
        let body = self.read_csv("samples.csv")?;
        let samples = read_samples_csv(body.as_bytes(), manifest.state_dim, manifest.input_dim)?;
        if samples.len() != manifest.samples {
            return Err(Error::Config(format!(
                "samples.csv has {} rows, manifest records {}",
                samples.len(),
                manifest.samples
            )));
        }
        Ok(samples)
    }

    pub fn batch(&self, dict: &Dictionary) -> Result<DataBatch> {
        build_data_matrices(&self.samples()?, dict, self.config.identification.rank_tol)
    }

    pub fn fit(&self) -> Result<()> {
        let dict = self.dictionary()?;
        let batch = self.batch(&dict)?;
        let fit = edmd_fit(&batch)?;
        let weights = self.config.cost_weights(dict.lifted_dim())?;
        let lqr = lqr_lti_baseline(&batch, &weights)?;
        self.write_json("dictionary.json", &dict)?;
        self.write_json(
            "model.json",
            &ModelArtifact {
                model_ref: model_ref(&fit.model),
                residual_frobenius: fit.residual.norm(),
                condition_number: fit.condition_number,
                model: fit.model,
            },
        )?;
        self.write_json(
            "lqr_baseline.json",
            &LqrArtifact {
                drift: lqr.model.drift,
                input: lqr.model.input,
                riccati: lqr.riccati,
                gain: lqr.gain,
                iterations: lqr.iterations,
            },
        )
    }

    pub fn load_dictionary(&self) -> Result<Dictionary> {
        let dict: Dictionary = self.read_json("dictionary.json")?;
        dict.validate()?;
        Ok(dict)
    }

    pub fn load_model(&self) -> Result<ModelArtifact> {
        let m: ModelArtifact = self.read_json("model.json")?;
        m.model.validate()?;
        Ok(m)
    }

    pub fn bound(&self) -> Result<()> {
        let dict = self.load_dictionary()?;
        let model = self.load_model()?.model;
        let batch = self.batch(&dict)?;
        let weights = self.config.cost_weights(dict.lifted_dim())?;
        let lp = estimate_error_bounds(&batch, &model, self.config.identification.lp_weights)?;
        let lipschitz = dict.lipschitz()?;
        let bound = ErrorBound::new(
            lp.c1,
            lp.c2,
            lipschitz,
            weights.lambda_min_state,
            weights.lambda_min_input,
        )?;
        let (noise, folded) = match self.config.noise_envelope.rule {
            NoiseRule::None => (None, None),
            NoiseRule::JacobianBound => {
                let amplitude = self.config.collection.noise.norm_bound(self.plant.n);
                let factor =
                    jacobian_noise_factor(batch.samples(), amplitude, lipschitz, dict.lifted_dim());
                let zmax = dict.max_lift_norm(
                    &dict.domain,
                    self.config.dictionary.lipschitz_grid_intervals,
                )?;
                let env = noise_coefficient(&batch, &factor, zmax)?;
                let folded = fold_noise_into_bound(&bound, &env)?;
                (Some(env), Some(folded))
            }
        };
        let (solver_bound, source) = match (&folded, self.config.noise_envelope.fold_into_solver) {
            (Some(f), true) => (f.clone(), "noise_folded"),
            _ => (bound.clone(), "lp"),
        };
        log::info!(
            "error bound c1 = {:.4}, c2 = {:.4}, C12 = {:.4}",
            bound.c1,
            bound.c2,
            bound.c12
        );
        self.write_json(
            "bounds.json",
            &BoundsArtifact {
                lp,
                bound,
                noise,
                folded,
                solver_bound,
                solver_bound_source: source.into(),
            },
        )
    }

    pub fn load_bounds(&self) -> Result<BoundsArtifact> {
        self.read_json("bounds.json")
    }

    pub fn load_lqr(&self) -> Result<LqrArtifact> {
        self.read_json("lqr_baseline.json")
    }

    pub fn solve(&self, nominal_only: bool) -> Result<()> {
        let dict = self.load_dictionary()?;
        let model_artifact = self.load_model()?;
        let bounds = if nominal_only {
            None
        } else {
            Some(self.load_bounds()?)
        };
        let lqr = self.load_lqr()?;
        let cfg = &self.config.solver;
        let model = Arc::new(model_artifact.model);
        let weights = self.config.cost_weights(dict.lifted_dim())?;

        let points = sample_collocation_points(
            &dict,
            &cfg.domain,
            cfg.collocation_points,
            cfg.rho,
            &mut self.config.rng(Stream::Collocation),
        )?;
        let probe = probe_points(
            &dict,
            &cfg.domain,
            cfg.probe_points,
            cfg.rho,
            &mut self.config.rng(Stream::Probe),
        )?;
        let basis = build_basis(dict.lifted_dim(), cfg, &points);
        log::info!(
            "value basis: {} of the candidate monomials kept",
            basis.len()
        );
        let template = GalerkinValueFn::zeros(basis, lifted_box(&points)?)?;
        let colloc = Collocation::new(points, &template, &model, &weights)?;
        let init_policy = Arc::new(Policy::linear_gain(lqr.gain.clone()));
        let init_sim = SimConfig::new(cfg.admissibility_horizon, cfg.admissibility_step);
        let init_valuefn =
            fit_initial_value(&model, &weights, &init_policy, &template, &probe, &init_sim)?;
        let radius = self.config.near_origin_radius();

        let (nominal, _) = solve_nominal(
            &model,
            &weights,
            cfg,
            init_policy.clone(),
            &init_valuefn,
            &colloc,
            &probe,
        )?;
        log_convergence("nominal", &nominal.log);
        self.write_json(
            "valuefn_nominal.json",
            &ValueFnArtifact {
                valuefn: (*nominal.valuefn).clone(),
                model_ref: model_artifact.model_ref.clone(),
                epsilon: nominal.log.epsilon,
                iterations: nominal.log.records.len(),
                converged: nominal.log.converged,
                near_origin_radius: radius,
            },
        )?;
        let Some(bounds) = bounds else {
            return Ok(());
        };
        let setup = IterationSetup {
            colloc: &colloc,
            probe: &probe,
            epsilon: cfg.epsilon,
        };
        let robust = run_policy_iteration(
            &model,
            &weights,
            &bounds.solver_bound,
            cfg,
            init_policy,
            &init_valuefn,
            &setup,
        )?;
        log_convergence("robust", &robust.log);
        self.write_csv("convergence.csv", |buf| robust.log.write_csv(buf))?;
        self.write_json(
            "valuefn_robust.json",
            &ValueFnArtifact {
                valuefn: (*robust.valuefn).clone(),
                model_ref: model_artifact.model_ref,
                epsilon: robust.log.epsilon,
                iterations: robust.log.records.len(),
                converged: robust.log.converged,
                near_origin_radius: radius,
            },
        )
    }

    pub fn load_valuefn(&self, name: &str) -> Result<ValueFnArtifact> {
        self.read_json(name)
    }

    pub fn convergence(&self) -> Result<Vec<(usize, f64, f64)>> {
        let body = self.read_csv("convergence.csv")?;
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let mut rows = Vec::new();
        for rec in reader.deserialize() {
            rows.push(rec?);
        }
        Ok(rows)
    }

    /// Controllers rebuilt from the persisted model, bounds and value
    /// functions.
    pub fn controllers(&self) -> Result<ShippedControllers> {
        let dict = self.load_dictionary()?;
        let model = Arc::new(self.load_model()?.model);
        let bounds = self.load_bounds()?;
        let lqr = self.load_lqr()?;
        let weights = self.config.cost_weights(dict.lifted_dim())?;
        let nominal = self.load_valuefn("valuefn_nominal.json")?;
        let robust = self.load_valuefn("valuefn_robust.json")?;
        let context = FeedbackContext::new(model, &weights);
        let nominal_valuefn = Arc::new(nominal.valuefn);
        let robust_valuefn = Arc::new(robust.valuefn);
        Ok(ShippedControllers {
            nominal: Policy::nominal(nominal_valuefn.clone(), context.clone())
                .with_near_origin(lqr.gain.clone(), nominal.near_origin_radius),
            robust: Policy::robust(
                robust_valuefn.clone(),
                context,
                &bounds.solver_bound,
                self.config.solver.rho_prime,
                None,
            )
            .with_near_origin(lqr.gain.clone(), robust.near_origin_radius),
            nominal_valuefn,
            robust_valuefn,
            baseline: Policy::linear_gain(lqr.gain),
            actual: self
                .plant
                .analytic()
                .map(|sol| Policy::analytic("actual optimal", self.plant.n, sol.control.clone())),
        })
    }

    pub fn evaluate(&self) -> Result<()> {
        let dict = self.load_dictionary()?;
        let model = self.load_model()?.model;
        let bounds = self.load_bounds()?;
        let weights = self.config.cost_weights(dict.lifted_dim())?;
        let ctrl = self.controllers()?;
        let x0_list = self.config.initial_states();
        let reference = match &ctrl.actual {
            Some(p) => ("actual optimal", p),
            None => ("nominal", &ctrl.nominal),
        };
        let costs = cost_table(
            &self.plant,
            &dict,
            reference,
            &ctrl.robust,
            &ctrl.baseline,
            &x0_list,
            &weights,
            &self.config.cost_sim(),
        )?;
        let controllers = Controllers {
            nominal: &ctrl.nominal,
            nominal_valuefn: &ctrl.nominal_valuefn,
            robust: &ctrl.robust,
            robust_valuefn: &ctrl.robust_valuefn,
            actual: ctrl.actual.as_ref(),
        };
        let z0_list = x0_list
            .iter()
            .map(|x| dict.lift(x))
            .collect::<Result<Vec<_>>>()?;
        let sim = self.config.analysis_sim();
        let tradeoff = tradeoff_report(
            &model,
            &weights,
            &bounds.solver_bound,
            &controllers,
            &z0_list,
            &sim,
        )?;
        let deviation = deviation_report(
            &self.plant,
            &dict,
            &model,
            &weights,
            &bounds.solver_bound,
            &controllers,
            &x0_list,
            &sim,
        )?;
        self.write_json("cost_table.json", &costs)?;
        self.write_json("tradeoff.json", &tradeoff)?;
        self.write_json("deviation_report.json", &deviation)?;
        self.write_tables(&costs, &tradeoff)
    }

    fn write_tables(&self, costs: &CostReport, tradeoff: &TradeoffReport) -> Result<()> {
        fs::write(
            self.path("cost_table.txt"),
            format!("config_hash {}\n{}", self.config_hash, costs.to_text()),
        )?;
        self.write_csv("tradeoff.csv", |buf| tradeoff.write_csv(buf))
    }

    pub fn load_reports(&self) -> Result<Reports> {
        Ok(Reports {
            costs: self.read_json("cost_table.json")?,
            tradeoff: self.read_json("tradeoff.json")?,
            deviation: self.read_json("deviation_report.json")?,
        })
    }

    /// Regenerates the text tables from the persisted reports.
    pub fn report(&self) -> Result<Reports> {
        let reports = self.load_reports()?;
        self.write_tables(&reports.costs, &reports.tradeoff)?;
        println!("{}", reports.costs.to_text());
        Ok(reports)
    }
}

pub struct Reports {
    pub costs: CostReport,
    pub tradeoff: TradeoffReport,
    pub deviation: DeviationReport,
}

fn log_convergence(label: &str, log: &ConvergenceLog) {
    match log.final_policy_change() {
        Some(d) => log::info!(
            "{label} policy iteration: {} iterations, final policy change {d:.3e}, converged {}",
            log.records.len(),
            log.converged
        ),
        None => log::warn!("{label} policy iteration produced no iterations"),
    }
}

fn model_ref(model: &BilinearModel) -> String {
    let json = serde_json::to_vec(model).expect("model serializes");
    format!("model-{}", &sha256_hex(&json)[..16])
}

/// Bounding box of the lifted collocation points.
fn lifted_box(points: &[DVector<f64>]) -> Result<StateBox> {
    let dim = points.first().map(|p| p.len()).unwrap_or(0);
    let mut lower = vec![f64::INFINITY; dim];
    let mut upper = vec![f64::NEG_INFINITY; dim];
    for p in points {
        for i in 0..dim {
            lower[i] = lower[i].min(p[i]);
            upper[i] = upper[i].max(p[i]);
        }
    }
    StateBox::new(lower, upper)
}
