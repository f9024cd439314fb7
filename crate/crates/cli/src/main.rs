mod args;
mod commands;
mod discrete;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

/// Error with the process exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_SOLVER: u8 = 2;
pub const EXIT_IO: u8 = 3;

pub type CliResult<T> = Result<T, Failure>;

/// Attach an exit status to any error.
pub trait Classify<T> {
    fn or_exit(self, code: u8) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> CliResult<T> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

pub fn invalid<T>(msg: impl std::fmt::Display) -> CliResult<T> {
    Err(Failure {
        code: EXIT_VALIDATION,
        error: anyhow::anyhow!("{msg}"),
    })
}

fn configure_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("ECOFLUX_THREADS") else {
        return Ok(());
    };
    let n: usize = match v.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return invalid(format!(
                "ECOFLUX_THREADS must be a positive integer, got `{v}`"
            ))
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .or_exit(EXIT_VALIDATION)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| commands::run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
