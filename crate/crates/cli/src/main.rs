//! `robust-sonc`: simulate, solve adjoints, price robust costs and test the
//! second-order conditions of a singular control from the command line.
//!
//! Exit codes: 0 success, 2 a condition is violated (`check`), 64 usage,
//! configuration or validation errors, 65 numerical failures including a
//! non-singular reference control.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::output::CliError;

/// Environment variable capping the rayon worker count.
const THREADS_VAR: &str = "ROBUST_SONC_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!("{THREADS_VAR}={raw:?} is not a positive integer"))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))
}

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(&cli.global, a),
        Command::Adjoint(a) => commands::adjoint(&cli.global, a),
        Command::Cost => commands::cost(&cli.global),
        Command::Check(a) => commands::check(&cli.global, a),
        Command::Expand(a) => commands::expand(&cli.global, a),
        Command::Example => commands::example(&cli.global),
        Command::Validate => commands::validate(&cli.global),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                output::EXIT_USAGE
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
