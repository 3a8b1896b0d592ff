use std::process::ExitCode;

use clap::Parser;
use spdc_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    match execute(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spdc-sim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
