mod commands;
mod config;

use std::panic;
use std::process::ExitCode;

use clap::Parser;

use crate::config::RunConfig;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KLFACTOR_LOG", "error")).init();
    let cfg = RunConfig::parse();
    // Input handling is meant to be panic-free; keep a guard so a bug still maps to an exit code.
    let outcome = panic::catch_unwind(|| commands::dispatch(&cfg));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("klfactor {}: {}", cfg.command.name(), f.message());
            ExitCode::from(f.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("klfactor {}: internal error", cfg.command.name());
            ExitCode::from(3)
        }
    }
}
