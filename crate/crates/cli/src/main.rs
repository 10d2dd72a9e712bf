mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use mder::training::TrainError;

/// Exit status 1: the input or configuration is invalid.
const EXIT_INVALID: u8 = 1;
/// Exit status 2: a valid request failed while running (I/O, divergence).
const EXIT_RUNTIME: u8 = 2;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<std::io::Error>() {
            return EXIT_RUNTIME;
        }
        if let Some(TrainError::Divergence { .. }) = cause.downcast_ref::<TrainError>() {
            return EXIT_RUNTIME;
        }
    }
    EXIT_INVALID
}

fn main() -> ExitCode {
    let cli = match args::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
