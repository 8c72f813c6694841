use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    fracschro_cli::run(fracschro_cli::Cli::parse())
}
