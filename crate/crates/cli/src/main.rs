use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfcd_cli::commands::{self, Run};
use rfcd_cli::config::RunConfig;
use rfcd_cli::CliResult;

/// Change detection between optical images of different spatial and
/// spectral resolutions.
#[derive(Parser)]
#[command(name = "rfcd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an observation pair with known change.
    Simulate(Common),
    /// Run robust fusion and sCVA on a dataset directory.
    Detect(WithInput),
    /// Score every detector on a dataset with a truth mask.
    Evaluate(WithInput),
    /// Simulate a suite of pairs and score every detector on each.
    Benchmark(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `paths.out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation seed (overrides `simulation.seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress progress messages.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct WithInput {
    #[command(flatten)]
    common: Common,
    /// Dataset directory (overrides `paths.input`).
    #[arg(long)]
    input: Option<PathBuf>,
}

fn resolve(common: &Common, input: Option<&PathBuf>) -> CliResult<Run> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        config.paths.out = Some(out.clone());
    }
    if let Some(input) = input {
        config.paths.input = Some(input.clone());
    }
    if let Some(seed) = common.seed {
        config.simulation.seed = seed;
    }
    Ok(Run::new(config, common.quiet))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => resolve(c, None).and_then(|r| commands::simulate(&r)),
        Command::Benchmark(c) => resolve(c, None).and_then(|r| commands::benchmark(&r)),
        Command::Detect(c) => {
            resolve(&c.common, c.input.as_ref()).and_then(|r| commands::detect(&r))
        }
        Command::Evaluate(c) => {
            resolve(&c.common, c.input.as_ref()).and_then(|r| commands::evaluate(&r))
        }
    };
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rfcd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
