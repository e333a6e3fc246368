use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown method {name:?}; known methods: {known}")]
    UnknownMethod { name: String, known: String },
    #[error("{method} needs a policy checkpoint")]
    MissingCheckpoint { method: String },
    #[error("{method} cannot run in a stochastic environment")]
    IncompatibleMode { method: String },
    #[error("problem {problem}, round {round}: {source}")]
    Scheduler {
        problem: usize,
        round: usize,
        #[source]
        source: teamsched_core::SchedulerError,
    },
    #[error("problem {problem}: {source}")]
    Env {
        problem: usize,
        #[source]
        source: teamsched_core::EnvError,
    },
    #[error("no results to report")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
