use std::path::PathBuf;

use smaspl_core::grid::GridError;
use smaspl_core::oracle::OracleError;
use smaspl_core::trainer::TrainError;
use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::log::LogError;
use crate::profiles::ProfileFileError;
use crate::report::ReportError;
use crate::scenario::ScenarioError;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Profiles(#[from] ProfileFileError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("derivative audit failed: {0}")]
    Audit(String),
    #[error("dispatch left constraints violated: {0}")]
    Unsafe(String),
}

impl RunError {
    /// 1 for bad input, 2 for numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Train(TrainError::Config(_)) => EXIT_VALIDATION,
            RunError::Train(_) | RunError::Audit(_) | RunError::Unsafe(_) => EXIT_NUMERICAL,
            RunError::Oracle(OracleError::Infeasible { .. }) => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RunError {
        let path = path.into();
        move |source| RunError::Io { path, source }
    }
}
