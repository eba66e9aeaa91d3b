use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    ExitCode::from(sps_cli::main_with(sps_cli::Cli::parse()))
}
