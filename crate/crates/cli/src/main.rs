use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use wrbm_cli::commands::{self, ModelPaths};
use wrbm_cli::{exit_code, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "wrbm", version, about = "Wasserstein-trained restricted Boltzmann machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Keep the persistent chains next to each checkpoint; `eval` needs them.
    #[arg(long, global = true)]
    retain_pcd: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Binarize and split the raw dataset.
    Ingest,
    /// Train one model with the `[train]` settings.
    Train,
    /// Train and validate every (lambda, eta) cell of `[grid]`.
    Grid,
    /// AIS log Z, KL, W_gamma, PCA and a sample grid for one checkpoint.
    Eval {
        /// Defaults to `<out>/train/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to `pcd.bin` beside the checkpoint.
        #[arg(long)]
        pcd: Option<PathBuf>,
    },
    /// Completion and denoising scores for the KDE baseline and checkpoints.
    Tasks {
        /// `NAME=PATH`, repeatable. Defaults to `rbm=<out>/train/model.ckpt`.
        #[arg(long = "checkpoint", value_name = "NAME=PATH")]
        checkpoints: Vec<String>,
    },
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let path = cli.config.context("--config is required")?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out,
    };
    let cfg = ExperimentConfig::load(&path, &overrides)?;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Train => commands::train_cmd(&cfg, cli.retain_pcd),
        Command::Grid => commands::grid_cmd(&cfg, cli.retain_pcd),
        Command::Eval { checkpoint, pcd } => {
            let mut paths = checkpoint.map_or_else(|| ModelPaths::default_for(&cfg), ModelPaths::beside);
            if let Some(p) = pcd {
                paths.pcd = p;
            }
            commands::eval_cmd(&cfg, &paths)
        }
        Command::Tasks { checkpoints } => {
            let models: Vec<_> = checkpoints
                .iter()
                .enumerate()
                .map(|(i, a)| commands::parse_model_arg(a, i))
                .collect();
            commands::tasks_cmd(&cfg, &models)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            // A closed stdout (e.g. piped into `head`) is not a failure.
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
