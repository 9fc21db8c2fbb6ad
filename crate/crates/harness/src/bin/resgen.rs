use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use resgen_harness::{
    compare_models, run_experiment, run_stage, ExperimentConfig, HarnessError, Run, RunManifest, Stage,
};

#[derive(Parser)]
#[command(name = "resgen", version, about = "Generative reservoir models and latent-space history matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML) or a run manifest (manifest.json).
    /// Defaults to the manifest in --out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
    /// Overrides the training seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensemble simulation and data generation.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training dataset.
    GenData(Common),
    /// Train the reservoir classifier used for FRD and perceptual features.
    TrainClassifier(Common),
    /// Train the generative model.
    Train(Common),
    /// History-match the reference case with ES-MDA.
    Assimilate {
        #[command(flatten)]
        common: Common,
        /// Model directory; `<out>/model` by default.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Generative quality metrics against the training set.
    Metrics {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write summary.json and report.md.
    Report(Common),
    /// Every stage in order.
    Run(Common),
    /// Tabulate finished runs that differ only in the model.
    Compare {
        /// Run directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Where to write comparison.{csv,md,json}.
        #[arg(long, default_value = "comparison")]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig, HarnessError> {
    let path = common.config.clone().unwrap_or_else(|| common.out.join(resgen_harness::MANIFEST_FILE));
    let mut cfg = if path.extension().is_some_and(|e| e == "json") {
        RunManifest::read(&path)?.config
    } else {
        ExperimentConfig::load(&path)?
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn open(common: &Common, model: Option<&Path>) -> Result<Run> {
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    let cfg = load_config(common)?;
    let mut run = Run::open(&common.out, cfg)?;
    if let Some(m) = model {
        run.model_dir = m.to_path_buf();
    }
    Ok(run)
}

fn stage(common: &Common, stage: Stage, model: Option<&Path>) -> Result<()> {
    let mut run = open(common, model)?;
    run_stage(&mut run, stage)?;
    eprintln!("{stage} finished in {}", run.dir.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(c) => stage(&c, Stage::GenData, None),
        Command::TrainClassifier(c) => stage(&c, Stage::TrainClassifier, None),
        Command::Train(c) => stage(&c, Stage::Train, None),
        Command::Assimilate { common, model } => stage(&common, Stage::Assimilate, model.as_deref()),
        Command::Metrics { common, model } => stage(&common, Stage::Metrics, model.as_deref()),
        Command::Report(c) => stage(&c, Stage::Report, None),
        Command::Run(c) => {
            let run = open(&c, None)?;
            let cfg = run.manifest.config.clone();
            run_experiment(cfg, &run.dir)?;
            println!("{}", run.dir.join(resgen_harness::REPORT_FILE).display());
            Ok(())
        }
        Command::Compare { runs, out } => {
            let cmp = compare_models(&runs)?;
            cmp.write(&out)?;
            print!("{}", cmp.to_markdown());
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<HarnessError>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
