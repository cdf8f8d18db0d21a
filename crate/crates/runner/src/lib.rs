//! Experiment matrix over detectors, training-set compositions and test
//! sets, improvement deltas against a baseline training set, and report
//! rendering.

pub mod config;
pub mod deltas;
pub mod matrix;
pub mod report;

use std::path::PathBuf;

use advaug_core::dataset::DatasetError;
use advaug_core::deteval::DetEvalError;
use advaug_core::fid::FidError;
use advaug_detect::DetectError;
use advaug_gan::GanError;

pub use config::ExperimentConfig;
pub use deltas::{improvement_deltas, DeltaCell, DeltaMean, DeltaTable};
pub use matrix::{run_matrix, run_matrix_with, CellFailure, CellResult, DetectorCost, ResultsTable, RunOptions};
pub use report::{best_per_row, render_report, write_report, ReportBundle, ReportDoc};

#[derive(Debug, thiserror::Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("{failed} of {total} matrix cells failed")]
    Partial { failed: usize, total: usize },
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] DetEvalError),
    #[error(transparent)]
    Fid(#[from] FidError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Gan(#[from] GanError),
}

impl RunnerError {
    /// Process exit status: 2 for configuration problems, 3 for bad input
    /// data, 4 for a matrix that finished with failed cells, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 2,
            RunnerError::Detect(DetectError::Config(_)) | RunnerError::Gan(GanError::Config(_)) => 2,
            RunnerError::Dataset(_) | RunnerError::Eval(_) | RunnerError::Fid(FidError::Data(_)) => 3,
            RunnerError::Detect(DetectError::Dataset(_) | DetectError::Eval(_) | DetectError::Image(_)) => 3,
            RunnerError::Gan(GanError::Dataset(_) | GanError::Image(_)) => 3,
            RunnerError::Partial { .. } => 4,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RunnerError {
    let path = path.into();
    move |source| RunnerError::Io { path, source }
}
