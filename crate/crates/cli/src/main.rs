mod config;
mod dataset;
mod pipeline;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rvefield::data::Family;

use config::PipelineConfig;
use pipeline::{Layout, Stage};

/// Environment variable naming the output root (default `rvefield-out`).
const OUT_ENV: &str = "RVEFIELD_OUT";

#[derive(Parser)]
#[command(name = "rvefield", version, about = "Recurrent surrogates for microstructural state-variable fields")]
struct Cli {
    /// Pipeline configuration (JSON); built-in desk-scale defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Upper bound on worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Replace the master seed of the configuration.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the training and held-out loading paths.
    GenPaths,
    /// Run the material-point ensemble on the loading paths.
    GenData,
    /// Fit normalizations and the field PCA on the training data.
    PcaFit,
    /// Train the configured surrogate.
    Train,
    /// Hidden-size trial on the last retained PCA coefficient.
    Trial,
    /// Evaluate the trained surrogate on the held-out data.
    Eval,
    /// gen-paths, gen-data, pca-fit, train and eval in order.
    All,
    /// Inspect and edit sequence files.
    Dataset {
        #[command(subcommand)]
        action: DatasetAction,
    },
}

#[derive(Subcommand)]
enum DatasetAction {
    /// Summary of a sequence file.
    Stats { file: PathBuf },
    /// Cut sequences where a field first exceeds a critical value.
    Trim {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 6.0)]
        crit: f64,
        #[arg(long, value_parser = parse_family, default_value = "gamma")]
        family: Family,
    },
    /// Concatenate sequence files.
    Pack {
        output: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

fn parse_family(s: &str) -> Result<Family, String> {
    match s {
        "gamma" => Ok(Family::Gamma),
        "tau" => Ok(Family::Tau),
        other => Err(format!("unknown field family '{other}' (gamma or tau)")),
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("cannot size the worker pool")?;
    }
    let stages: Vec<Stage> = match cli.command {
        Command::Dataset { action } => {
            match action {
                DatasetAction::Stats { file } => print!("{}", dataset::stats(&file)?),
                DatasetAction::Trim { input, output, crit, family } => {
                    let n = dataset::trim(&input, &output, crit, family)?;
                    println!("{n} sequences shortened");
                }
                DatasetAction::Pack { output, inputs } => {
                    let n = dataset::pack(&output, &inputs)?;
                    println!("{n} sequences written to {}", output.display());
                }
            }
            return Ok(());
        }
        Command::GenPaths => vec![Stage::GenPaths],
        Command::GenData => vec![Stage::GenData],
        Command::PcaFit => vec![Stage::PcaFit],
        Command::Train => vec![Stage::Train],
        Command::Trial => vec![Stage::Trial],
        Command::Eval => vec![Stage::Eval],
        Command::All => pipeline::ALL.to_vec(),
    };
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed_override {
        cfg.seed = seed;
    }
    cfg.validate().context("configuration rejected")?;
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("rvefield-out"), PathBuf::from);
    let layout = Layout { root };
    for stage in stages {
        pipeline::run_stage(stage, &cfg, &layout)?;
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
