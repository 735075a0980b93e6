use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use koopman_robust::config::ExperimentConfig;
use koopman_robust::pipeline::{Pipeline, RunOptions, Stage, CONFIG_EXIT_CODE};

/// Identify a bilinear Koopman surrogate, bound its error and synthesize a
/// robust controller.
#[derive(Parser, Debug)]
#[command(name = "koopman-robust", version)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run a single stage: collect, fit, bound, solve, evaluate or report.
    #[arg(long)]
    stage: Option<Stage>,
    /// Solve only the nominal problem and stop.
    #[arg(long)]
    nominal_only: bool,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            log::error!("thread pool: {e}");
            return ExitCode::from(CONFIG_EXIT_CODE as u8);
        }
    }
    let mut config = match ExperimentConfig::load(&cli.config) {
        Ok(c) => c,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(CONFIG_EXIT_CODE as u8);
        }
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli
        .out
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&config.plant));
    let pipeline = match Pipeline::new(config, out) {
        Ok(p) => p,
        Err(e) => {
            log::error!("{e}");
            return ExitCode::from(CONFIG_EXIT_CODE as u8);
        }
    };
    let opts = RunOptions {
        stage: cli.stage,
        nominal_only: cli.nominal_only,
    };
    match pipeline.run(opts) {
        Ok(()) => {
            log::info!("artifacts in {}", pipeline.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
