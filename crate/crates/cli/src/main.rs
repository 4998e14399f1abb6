use std::process::ExitCode;

use clap::Parser;
use voxc::args::Cli;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = voxc::configure_threads(std::env::var("VOXC_THREADS").ok().as_deref()).and_then(|_| voxc::run(&cli));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(voxc::exit_code(&e))
        }
    }
}
