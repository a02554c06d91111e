use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use goalladder::config::{parse_config, ComparatorKind, ExperimentConfig};
use goalladder::experiment::{cmd_ablate, cmd_eval, cmd_replay, cmd_run, format_ablation, AblationAxis, RunOptions};

#[derive(Parser)]
#[command(name = "goalladder", version, about = "Goal discovery and ranking for language-specified RL tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the comparator kind: oracle, replay, remote or interactive
    #[arg(long)]
    comparator: Option<ComparatorKind>,
    /// Overrides the output directory
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => parse_config(path).with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(kind) = self.comparator {
            config.comparator.kind = kind;
        }
        if let Some(out) = &self.output {
            config.output_dir = out.clone();
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train one seeded run and write its artifacts
    Run {
        #[command(flatten)]
        common: Common,
        /// Record every comparator verdict to this log
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Sweep one axis over several values and seeds
    Ablate {
        #[command(flatten)]
        common: Common,
        /// rating-mode or buffer-cap
        #[arg(long)]
        axis: AblationAxis,
        /// Comma-separated axis values, e.g. elo,greedy or 1,10,200
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        /// Comma-separated seeds
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Re-run with verdicts from a recorded log
    Replay {
        #[command(flatten)]
        common: Common,
        /// Log written by `run --record`
        #[arg(long)]
        log: PathBuf,
    },
    /// Report the success rate of a saved policy
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 20)]
        episodes: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, record } => {
            let config = common.load()?;
            let report = cmd_run(&config, &RunOptions { record })?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Ablate {
            common,
            axis,
            values,
            seeds,
        } => {
            if values.is_empty() {
                bail!("--values needs at least one value");
            }
            let config = common.load()?;
            let rows = cmd_ablate(&config, axis, &values, &seeds)?;
            print!("{}", format_ablation(axis, &rows));
        }
        Command::Replay { common, log } => {
            let config = common.load()?;
            let report = cmd_replay(&config, &log)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Eval {
            common,
            checkpoint,
            episodes,
        } => {
            let config = common.load()?;
            let rate = cmd_eval(&config, &checkpoint, episodes)?;
            println!("success rate {rate:.3} over {episodes} episodes");
        }
    }
    Ok(())
}
