mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{Failure, Outcome};

#[derive(Parser, Debug)]
#[command(name = "chiral-relax", version, about = "Relaxation of a two-ladder chiral molecule under non-Markovian collisions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// INI configuration file
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides [output] directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed; overrides [run] seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the truncated-ladder equations in the time domain
    Simulate(Common),
    /// Invert the closed-form Laplace-space observables
    Laplace(Common),
    /// Renewal Monte Carlo of the full density matrix
    Mc(Common),
    /// Predicted vs fitted long-time power laws
    Asymptotics(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, fn(&Common) -> Result<Outcome, Failure>) = match &cli.command {
        Command::Simulate(c) => (c, commands::simulate),
        Command::Laplace(c) => (c, commands::laplace),
        Command::Mc(c) => (c, commands::mc),
        Command::Asymptotics(c) => (c, commands::asymptotics),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            eprintln!("--threads must be >= 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(common) {
        Ok(out) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(if out.warnings.is_empty() { 0 } else { 4 })
        }
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code())
        }
    }
}
