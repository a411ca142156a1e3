//! Experiment front end: configuration, run directories and the `gen`,
//! `train`, `select`, `ablate` and `report` commands.

pub mod commands;
pub mod config;

pub use commands::{ablate, gen, report, select, train, RunDir};
pub use config::{ConfigError, ExperimentConfig, PoolName};

use judgelab_core::bilevel::BilevelError;
use judgelab_core::minilang::CorpusError;
use judgelab_core::selector::SelectorError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    BadFile { path: PathBuf, message: String },
    #[error("checkpoint not found at {0} (train a judge first or pass --checkpoint)")]
    MissingCheckpoint(PathBuf),
    #[error("{dir} holds no run data; expected {expected}")]
    EmptyRun { dir: PathBuf, expected: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Training(#[from] BilevelError),
    #[error(transparent)]
    Selection(#[from] SelectorError),
}

impl LabError {
    /// 2 for anything wrong with the request itself, 3 for failures while
    /// carrying it out.
    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Config(_)
            | LabError::Usage(_)
            | LabError::Corpus(CorpusError::Infeasible(_)) => 2,
            LabError::Training(BilevelError::Config(_)) => 2,
            _ => 3,
        }
    }
}
