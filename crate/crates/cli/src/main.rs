//! `ilqgame`: solve racing scenarios and LQ toy games, export trajectories.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ilqgame::{SolverMode, SolverSettings};

mod run;

#[derive(Parser)]
#[command(
    name = "ilqgame",
    version,
    about = "Feedback and open-loop Nash trajectories via iLQGame"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a racing scenario file, or every member of a sweep.
    Run {
        /// Scenario JSON file.
        #[arg(required_unless_present = "sweep", conflicts_with = "sweep")]
        scenario: Option<PathBuf>,
        /// Sweep JSON file; runs are solved in parallel into `run_<i>/`.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve a random exactly linear-quadratic game.
    LqToy {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        players: usize,
        #[arg(long, default_value_t = 4)]
        state_dim: usize,
        #[arg(long, default_value_t = 2)]
        input_dim: usize,
        #[arg(long, default_value_t = 10)]
        horizon: usize,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Clone)]
struct SolverFlags {
    /// feedback | open-loop | ilqr
    #[arg(long)]
    mode: Option<SolverMode>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Add per-player best-response gaps to the metadata.
    #[arg(long)]
    certify: bool,
}

impl SolverFlags {
    fn apply(&self, base: SolverSettings) -> SolverSettings {
        SolverSettings {
            mode: self.mode.unwrap_or(base.mode),
            eta: self.eta.unwrap_or(base.eta),
            max_iterations: self.max_iters.unwrap_or(base.max_iterations),
            convergence_tol: self.tol.unwrap_or(base.convergence_tol),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run {
            scenario: Some(path),
            solver,
            out,
            ..
        } => run::scenario(&path, &solver, &out),
        Command::Run {
            sweep: Some(path),
            solver,
            out,
            ..
        } => run::sweep(&path, &solver, &out),
        Command::Run { .. } => unreachable!("clap requires a scenario or --sweep"),
        Command::LqToy {
            seed,
            players,
            state_dim,
            input_dim,
            horizon,
            solver,
            out,
        } => run::lq_toy(
            run::ToyShape {
                seed,
                players,
                state_dim,
                input_dim,
                horizon,
            },
            &solver,
            &out,
        ),
    };
    match result {
        Ok(run::Status::Converged) => ExitCode::SUCCESS,
        Ok(run::Status::NotConverged) => ExitCode::from(2),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
