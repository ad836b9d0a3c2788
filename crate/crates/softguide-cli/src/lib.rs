//! Command layer of the `softguide` binary: run configuration, the five
//! subcommands and their output files.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

pub use commands::{Context, Run};
pub use config::RunConfig;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const NO_CONVERGENCE: i32 = 3;
    pub const UNSUPPORTED: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Lib(#[from] softguide::Error),
    #[error("output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use softguide::Error as E;
        match self {
            CliError::Config(_) => exit::VALIDATION,
            CliError::Output(_) => exit::INTERNAL,
            CliError::Lib(e) => match e {
                E::Validation(_) | E::Geometry(_) | E::GridTooCoarse { .. } => exit::VALIDATION,
                E::NoConvergence { .. } | E::CriticalWindow { .. } | E::Integration(_) | E::Refine(_) => {
                    exit::NO_CONVERGENCE
                }
                E::UnsupportedCase(_) => exit::UNSUPPORTED,
                E::Internal(_) => exit::INTERNAL,
            },
        }
    }
}
