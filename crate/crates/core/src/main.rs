use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = quadnc::cli::Cli::parse();
    match quadnc::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
