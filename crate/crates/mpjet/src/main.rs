use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mpjet::commands::{self, Stage};
use mpjet::config::RunConfig;
use mpjet::error::{AppError, AppResult};

#[derive(Parser)]
#[command(name = "mpjet", version, about = "Modal decomposition and forecasting of gridded flow snapshots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding every artifact of the run.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Synthesize a snapshot field.
    Generate,
    /// Extract modes and a reduced-order model.
    Decompose,
    /// Rebuild the field from the reduced-order model.
    Reconstruct,
    /// Downsample, subtract the baseline and fit the scaling.
    Preprocess,
    /// Fit the configured forecaster.
    Train,
    /// Forecast two snapshots from one test window.
    Predict,
    /// Score the forecaster on every test window.
    Evaluate,
    /// Summarize the artifacts present in the output directory.
    Report,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Self {
        match c {
            Command::Generate => Stage::Generate,
            Command::Decompose => Stage::Decompose,
            Command::Reconstruct => Stage::Reconstruct,
            Command::Preprocess => Stage::Preprocess,
            Command::Train => Stage::Train,
            Command::Predict => Stage::Predict,
            Command::Evaluate => Stage::Evaluate,
            Command::Report => Stage::Report,
        }
    }
}

fn load(cli: &Cli) -> AppResult<RunConfig> {
    let text = match &cli.config {
        Some(p) => {
            std::fs::read_to_string(p).map_err(|e| AppError::Config(format!("cannot read {}: {e}", p.display())))?
        }
        None => String::new(),
    };
    RunConfig::parse(&text, cli.seed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| commands::run(cli.command.into(), &cfg, &cli.out));
    match result {
        Ok(m) => {
            for (k, v) in &m.results {
                println!("{k} = {v}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
