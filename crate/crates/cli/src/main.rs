use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    netdist_cli::run(netdist_cli::Cli::parse())
}
