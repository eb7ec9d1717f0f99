//! Configuration files, evaluation runs, episode logs, metrics and
//! plot-data export for the `leader` command-line tool.

pub mod config;
pub mod eval;
pub mod export;
pub mod logs;
pub mod metrics;

use std::path::Path;

use thiserror::Error;

pub use config::RunConfig;
pub use eval::{run_evaluation, Evaluation, EvalSettings, Policy};
pub use export::{export_attention_snapshot, SnapshotRecord};
pub use logs::{EpisodeHeader, EpisodeLog, LogRecord, StepLog};
pub use metrics::{compute_metrics, MetricsReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("log line {line}: {reason}")]
    Log { line: usize, reason: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Train(#[from] leader_train::TrainError),
    #[error(transparent)]
    Neural(#[from] leader_neural::NeuralError),
    #[error(transparent)]
    Map(#[from] leader_core::map::MapError),
    #[error(transparent)]
    Scenario(#[from] leader_core::scenario::ScenarioError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
