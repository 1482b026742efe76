//! `rowgraph`: transform a relational dataset, turn it into a graph or a DFS
//! feature table, export sampled training batches and score predictions.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rowgraph::synth::CommerceOptions;

use config::{AuditCommand, DfsCommand, EvaluateCommand, GraphCommand, SampleCommand, TransformCommand};
use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "rowgraph", version, about = "Relational databases to graphs and feature tables")]
struct Cli {
    /// YAML or JSON config for the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root of all randomness in the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Featurize a dataset and write the result plus its fitted parameters.
    Transform,
    /// Convert a dataset into a heterogeneous graph directory.
    ConstructGraph,
    /// Augment the target table with deep features.
    Dfs {
        /// Overrides the config's depth.
        #[arg(long)]
        depth: Option<usize>,
        /// Also write the equivalent SQL to this file.
        #[arg(long)]
        emit_sql: Option<PathBuf>,
    },
    /// Build task splits and export sampled subgraph batches per split.
    Sample,
    /// Score a predictions file against one split of a task.
    Evaluate {
        /// Overrides the config's predictions file.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Check exported batches for leakage; exits 3 on any violation.
    Audit {
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        batches: Option<PathBuf>,
    },
    /// Write the synthetic commerce dataset.
    Synth {
        #[arg(long, default_value_t = 1000)]
        customers: usize,
        #[arg(long, default_value_t = 100)]
        products: usize,
        #[arg(long, default_value_t = 10_000)]
        orders: usize,
    },
    /// Write constant-score predictions for a split, a reference floor.
    PredictConstant,
}

fn config<T: serde::de::DeserializeOwned + config::Rebase>(cli: &Cli) -> Result<T> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("this command needs --config".into()))?;
    config::load(path)
}

fn out_dir(cli: &Cli) -> Result<&Path> {
    cli.out
        .as_deref()
        .ok_or_else(|| CliError::Config("this command needs --out".into()))
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads {n}: {e}")))?;
    }
    match &cli.command {
        Command::Transform => commands::transform(&config::<TransformCommand>(cli)?, cli.seed, out_dir(cli)?),
        Command::ConstructGraph => commands::construct_graph(&config::<GraphCommand>(cli)?, cli.seed, out_dir(cli)?),
        Command::Dfs { depth, emit_sql } => {
            let mut cfg: DfsCommand = config(cli)?;
            if let Some(d) = depth {
                cfg.depth = *d;
            }
            if let Some(p) = emit_sql {
                cfg.emit_sql = Some(p.clone());
            }
            commands::dfs(&cfg, cli.seed, out_dir(cli)?)
        }
        Command::Sample => commands::sample(&config::<SampleCommand>(cli)?, cli.seed, out_dir(cli)?),
        Command::Evaluate { predictions } => {
            let mut cfg: EvaluateCommand = config(cli)?;
            if let Some(p) = predictions {
                cfg.predictions = Some(p.clone());
            }
            let report = commands::evaluate_predictions(&cfg, cli.seed, cli.out.as_deref())?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            Ok(())
        }
        Command::Audit { graph, batches } => {
            let cfg = match (graph, batches, &cli.config) {
                (Some(g), Some(b), _) => AuditCommand {
                    graph: g.clone(),
                    batches: b.clone(),
                },
                (None, None, Some(_)) => config(cli)?,
                _ => return Err(CliError::Config("audit needs --graph and --batches, or --config".into())),
            };
            let report = commands::audit(&cfg)?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
            match report.violations.len() {
                0 => Ok(()),
                n => Err(CliError::Data(format!("{n} leakage violations"))),
            }
        }
        Command::Synth {
            customers,
            products,
            orders,
        } => commands::synth(&CommerceOptions::new(*customers, *products, *orders, cli.seed), out_dir(cli)?),
        Command::PredictConstant => {
            let path = commands::predict_constant(&config::<EvaluateCommand>(cli)?, cli.seed, out_dir(cli)?)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
