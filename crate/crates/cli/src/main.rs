//! `jointbn`: data generation, feature extraction, training, evaluation,
//! λ sweeps and run comparison.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

fn exit_code(err: &jointbn::Error) -> u8 {
    match err {
        jointbn::Error::NumericFailure { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "info",
        _ => "debug",
    };
    let level = if cli.quiet { "warn" } else { level };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
