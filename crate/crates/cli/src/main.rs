//! `bandit`: command-line front end for the hidden-bandit library.
//!
//! Exit codes: 0 success, 1 computational failure or invalid parameters,
//! 2 usage or config error.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};

use commands::{CliError, Overrides, Run};

#[derive(Parser)]
#[command(name = "bandit", version, about = "Hidden two-state bandit arms with intermittent availability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every arm of the config.
    Validate {
        #[command(flatten)]
        flags: Overrides,
        /// Also require 0 <= eta0 < r0 < eta1 < r1 <= 1.
        #[arg(long)]
        strict: bool,
    },
    /// Value tables of every arm at one subsidy.
    Solve {
        #[command(flatten)]
        flags: Overrides,
    },
    /// Policy shape and switch beliefs of every arm at one subsidy.
    Threshold {
        #[command(flatten)]
        flags: Overrides,
    },
    /// Index values at the configured beliefs.
    Index {
        #[command(flatten)]
        flags: Overrides,
    },
    /// Nestedness of the not-play regions over a subsidy sweep.
    Indexability {
        #[command(flatten)]
        flags: Overrides,
    },
    /// Monte-Carlo run of the configured policies.
    Simulate {
        #[command(flatten)]
        flags: Overrides,
    },
    /// Index against myopic at each configured discount factor.
    Compare {
        #[command(flatten)]
        flags: Overrides,
    },
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { flags, strict } => commands::validate(&Run::load(flags)?, strict),
        Command::Solve { flags } => commands::solve_cmd(&Run::load(flags)?),
        Command::Threshold { flags } => commands::threshold(&Run::load(flags)?),
        Command::Index { flags } => commands::index(&Run::load(flags)?),
        Command::Indexability { flags } => commands::indexability(&Run::load(flags)?),
        Command::Simulate { flags } => commands::simulate(&Run::load(flags)?),
        Command::Compare { flags } => commands::compare(&Run::load(flags)?),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BANDIT_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        if let CliError::Solver(hidden_bandit::SolverError::NotConverged { residual, .. }) = &e {
            eprintln!("residual: {residual}");
        }
        std::process::exit(e.exit_code());
    }
}
