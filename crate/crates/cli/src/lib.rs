//! Command-line front end: dataset generation, training, synthesis,
//! evaluation and verification of AIGER circuits.

pub mod bridge;
pub mod commands;
pub mod dataset;
pub mod eval;
pub mod manifest;
pub mod training;

use thiserror::Error;

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "AIGEN_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("synthesis did not complete: {0}")]
    Incomplete(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 2,
            CliError::Incomplete(_) => 3,
            CliError::Other(_) => 4,
        }
    }
}

/// Worker count: explicit flag, then the environment, then available cores.
pub fn worker_count(flag: Option<usize>) -> usize {
    flag.or_else(|| std::env::var(WORKERS_ENV).ok()?.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
