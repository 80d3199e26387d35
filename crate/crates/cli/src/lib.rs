//! Command drivers, run configuration and file formats for the
//! `lowrank-adapt` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod featfile;
pub mod params;
pub mod vocabfile;

pub use commands::{
    cmd_ablation, cmd_ad, cmd_decompose, cmd_eval, cmd_gensynth, cmd_gradcheck, cmd_train,
    CommandOutput,
};
pub use config::RunConfig;

/// Environment variable naming the root under which run directories are created.
pub const RUNS_ENV: &str = "LOWRANK_ADAPT_RUNS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] lowrank_adapt::Error),
}

impl CliError {
    /// Machine-parsable category printed on failure.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.category(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}
