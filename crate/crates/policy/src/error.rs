use teamsched_autodiff::{CheckpointError, ShapeError};
use teamsched_core::{EnvError, ModelError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("the interactive variant requires a deterministic environment")]
    RequiresDeterministic,
    #[error("no unscheduled task left to select")]
    EmptyPool,
    #[error("forced schedule is not a valid decision sequence: {0}")]
    InvalidForcedSchedule(String),
    #[error("checkpoint metadata: {0}")]
    Metadata(String),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("batch shape mismatch: {0}")]
    BatchShape(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("gradient norm above {ceiling} for {epochs} consecutive epochs (stopped at epoch {epoch})")]
    Diverged { ceiling: f64, epochs: u32, epoch: u64 },
    #[error("training log i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("training log: {0}")]
    Csv(#[from] csv::Error),
    #[error("training config: {0}")]
    Config(#[from] serde_json::Error),
}
