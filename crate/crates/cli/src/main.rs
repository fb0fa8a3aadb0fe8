mod config;
mod report;
mod stages;
mod svg;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netvol::kv::KvFile;
use netvol::{Error, Result, Scenario};

use crate::config::RunConfig;
use crate::stages::Runner;

/// Network-structure volatility indicator pipeline.
#[derive(Debug, Parser)]
#[command(name = "netvol", version)]
struct Cli {
    /// Key-value config file. For `synth` this is a scenario file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Fail instead of rebuilding missing or stale artifacts.
    #[arg(long, global = true)]
    frozen: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load prices and write returns and realized variance.
    Ingest,
    /// Build one correlation graph per window.
    Graphs,
    /// Train the walk-forward autoencoders and score each next-day graph.
    Indicator,
    /// Fit every forecaster with and without the indicator.
    Forecast,
    /// Figures, tables and the run summary.
    Report,
    /// Generate a synthetic market with known regime labels.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let config = cli
        .config
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size thread pool: {e}")))?;
    }
    if let Command::Synth { out } = &cli.command {
        let mut scenario = Scenario::from_kv(&KvFile::read(&config)?)?;
        if let Some(seed) = cli.seed {
            scenario.seed = seed;
        }
        scenario.validate()?;
        return stages::synth(&scenario, out);
    }
    let runner = Runner::new(RunConfig::read(&config, cli.seed)?, cli.frozen);
    match cli.command {
        Command::Ingest => runner.ingest(),
        Command::Graphs => runner.graphs(),
        Command::Indicator => runner.indicator(),
        Command::Forecast => runner.forecast(),
        Command::Report => runner.report(),
        Command::Synth { .. } => unreachable!(),
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
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
