use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod certify;
mod composite;
mod config;
mod error;
mod lemmas;
mod output;
mod simulate;
mod svg;

use config::FileConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "fxtiss", version, about = "Fixed-time ISS simulations, certificate checks and lemma suites")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// JSON run configuration; flags override its entries
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate a scenario and write trajectories, a summary and a plot
    Simulate(simulate::SimulateArgs),
    /// Sample-check Lyapunov certificates and interconnection bounds
    Certify(certify::CertifyArgs),
    /// Build the composite certificate and its settling-time bound
    Composite(composite::CompositeArgs),
    /// Run the randomized inequality suites
    Lemmas(lemmas::LemmaArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.global.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    if let Some(jobs) = cli.global.jobs.or(file.jobs) {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate::run(&cli.global, &file, a),
        Command::Certify(a) => certify::run(&cli.global, &file, a),
        Command::Composite(a) => composite::run(&cli.global, &file, a),
        Command::Lemmas(a) => lemmas::run(&cli.global, &file, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
