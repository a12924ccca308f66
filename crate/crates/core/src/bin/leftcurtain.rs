use std::process::ExitCode;

use clap::Parser;
use leftcurtain::cli::{run, Cli, CliError};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::VerificationFailed(_)) {
                eprintln!("leftcurtain: {e}");
            } else {
                eprintln!("leftcurtain: verification failed");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
