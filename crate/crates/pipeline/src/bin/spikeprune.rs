use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::{error, info};
use spikeprune::config::DATA_ROOT_ENV;
use spikeprune::{ExperimentConfig, Pipeline, PipelineError, Stage};

/// Train, prune, quantize and analyze spiking networks.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// One of train-ann, convert, train-snn, prune-spatial, prune-temporal,
    /// quantize, analyze, eval-noise, report, or `all`.
    #[arg(long, default_value = "all")]
    stage: String,
    /// Overrides the config's global seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for artifacts and manifests.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker threads (defaults to the number of cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(args: Args) -> Result<(), PipelineError> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| match e {
        PipelineError::Io { path, source } => PipelineError::Config(format!("{}: {source}", path.display())),
        other => other,
    })?;
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    cfg.resolve(std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from))?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(format!("--threads: {e}")))?;
    }
    let mut pipeline = Pipeline::new(cfg, &args.out)?;
    info!("config hash {}", pipeline.config_hash());
    let outcomes = if args.stage == "all" {
        pipeline.run_all()?
    } else {
        let stage = Stage::from_name(&args.stage)
            .ok_or_else(|| PipelineError::Config(format!("unknown stage {:?}", args.stage)))?;
        vec![pipeline.run(stage)?]
    };
    for o in outcomes {
        let state = if o.skipped { "up to date" } else { "done" };
        println!("{:<15} {state:<10} {:.1}s", o.stage.name(), o.manifest.wall_time_s);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
