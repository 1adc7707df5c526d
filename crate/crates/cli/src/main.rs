//! `maskbc` command-line interface.
//!
//! Exit codes: 0 success, 1 parse or usage error, 2 infeasible input or
//! budgets, 3 a check failed.

mod args;
mod commands;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use commands::{ExtremalArgs, Failure, FrontierArgs, Output, VerifyArgs, EXIT_USAGE};

fn dispatch(cli: &Cli) -> Result<Output, Failure> {
    let unit = cli.unit;
    match &cli.command {
        Command::Eval { files } => commands::eval(&files.spec, &files.strategy, unit),
        Command::Verify { files, trials, seed, inject_fault, extremal, mu, tol, rel_tol } => {
            commands::verify(&VerifyArgs {
                spec: &files.spec,
                strategy: &files.strategy,
                trials: *trials,
                seed: *seed,
                inject_fault: inject_fault.as_deref(),
                extremal: *extremal,
                mu,
                tol: *tol,
                rel_tol: *rel_tol,
            })
        }
        Command::Frontier { spec, mu_list, e1, e2, seed, restarts, format } => commands::frontier(
            &FrontierArgs { spec, mu_list, e1: *e1, e2: *e2, seed: *seed, restarts: *restarts, format: *format },
            unit,
        ),
        Command::Mc { files, n, seed } => commands::mc(&files.spec, &files.strategy, *n, *seed, unit),
        Command::ExtremalTest { spec, mu, candidates, random, seed } => commands::extremal_test(
            &ExtremalArgs { spec, mu: *mu, candidates: candidates.as_deref(), random: *random, seed: *seed },
            unit,
        ),
        Command::SelfTest { only } => commands::self_test(only),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            let written = match &cli.output {
                Some(path) => std::fs::write(path, &out.text),
                None => std::io::stdout().write_all(out.text.as_bytes()),
            };
            if let Err(e) = written {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(EXIT_USAGE);
            }
            ExitCode::from(out.code)
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
