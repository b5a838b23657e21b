use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = mems_testbed_cli::Cli::parse();
    ExitCode::from(mems_testbed_cli::execute(cli))
}
