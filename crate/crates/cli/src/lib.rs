//! JSON-driven front end for `qf-core`.

use std::path::PathBuf;
use std::process::ExitCode;

use thiserror::Error;

pub mod commands;
pub mod config;

pub use commands::{dispatch, plan, Outcome};
pub use config::{parse_config, Command, RunConfig};

/// The JSON schema shipped for configs.
pub const SCHEMA: &str = include_str!("../schema/run_config.schema.json");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] qf_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Core(_) => ExitCode::from(1),
            _ => ExitCode::from(3),
        }
    }
}
