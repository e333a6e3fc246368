//! Learned scheduling policy: heterogeneous graph attention encoder, LSTM
//! schedule propagator, agent and task selectors, and policy-gradient
//! training over the multi-round environment.

mod error;
pub mod hetgraph;
pub mod net;
pub mod rollout;
pub mod scheduler;
pub mod train;

pub use error::{PolicyError, TrainError};
pub use hetgraph::{build_het_graph, EdgeType, HetGraph, NodeType};
pub use net::{lstm_step, HybridNet, LstmCell, PolicyConfig};
pub use rollout::{generate_schedule, interactive_schedule, sample_best, schedule_log_prob, DecodeMode, Rollout};
pub use scheduler::{Decoding, HybridNetScheduler, InteractiveScheduler};
pub use train::{train, Baseline, EpochStats, TrainConfig, Trainer};
