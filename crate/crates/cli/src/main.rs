use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = safenav_cli::Cli::parse();
    match safenav_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
