use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tree_alime::explain::Method;
use tree_alime_cli::commands::{self, CmdResult, Failure, FailureKind};
use tree_alime_cli::config::RunConfig;

/// Explain black-box tabular classifiers with LIME, ALIME and tree-ALIME.
#[derive(Parser)]
#[command(name = "tree-alime", version)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the explanation method (and the fidelity/stability method list).
    #[arg(long, global = true)]
    method: Option<Method>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Load, impute, encode, split and scale the dataset.
    Ingest,
    /// Train the black-box classifier (grid search unless hidden sizes are fixed).
    TrainBlackbox,
    /// Train the denoising autoencoder.
    TrainAe,
    /// Explain one test instance.
    Explain {
        /// Row of the test split; overrides the config.
        #[arg(long)]
        instance: Option<usize>,
    },
    /// Local fidelity sweep over neighborhood sizes.
    Fidelity,
    /// Jaccard stability sweep over neighborhood sizes.
    Stability,
}

fn input_error(msg: impl Into<String>) -> Failure {
    Failure {
        kind: FailureKind::Input,
        error: anyhow::anyhow!(msg.into()),
    }
}

fn run(cli: Cli) -> CmdResult {
    let config = cli.config.ok_or_else(|| input_error("--config is required"))?;
    let out = cli.out.ok_or_else(|| input_error("--out is required"))?;
    let mut cfg = RunConfig::load(&config).map_err(|error| Failure {
        kind: FailureKind::Input,
        error,
    })?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(method) = cli.method {
        cfg.explain.method = method;
        cfg.fidelity.methods = vec![method];
        cfg.stability.methods = vec![method];
    }
    match cli.command {
        Command::Ingest => commands::ingest(&cfg, &out),
        Command::TrainBlackbox => commands::train_blackbox(&cfg, &out),
        Command::TrainAe => commands::train_ae(&cfg, &out),
        Command::Explain { instance } => {
            if let Some(i) = instance {
                cfg.explain.instance = i;
            }
            commands::explain(&cfg, &out)
        }
        Command::Fidelity => commands::fidelity(&cfg, &out),
        Command::Stability => commands::stability(&cfg, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("{f}");
            ExitCode::from(f.kind.exit_code())
        }
    }
}
