use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use smpc::{commands, AppError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "smpc", version, about = "Stochastic economic MPC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal state laws and scenario fans per horizon
    SolveOcp(Args),
    /// Monte-Carlo closed-loop costs per horizon
    RunMpc(Args),
    /// Distances to the stationary law and exceptional-set counts
    Turnpike(Args),
    /// Consolidated report.json with every diagnostic
    Report(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment configuration (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Overrides mpc.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides output.directory
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, AppError> {
    let (args, command): (&Args, fn(&Experiment, &std::path::Path) -> smpc::Result<Vec<PathBuf>>) =
        match &cli.command {
            Command::SolveOcp(a) => (a, commands::solve_ocp),
            Command::RunMpc(a) => (a, commands::run_mpc),
            Command::Turnpike(a) => (a, commands::turnpike),
            Command::Report(a) => (a, commands::report),
        };
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.mpc.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output.directory = out.clone();
    }
    let out = config.output.directory.clone();
    let exp = Experiment::new(config)?;
    command(&exp, &out)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("smpc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
