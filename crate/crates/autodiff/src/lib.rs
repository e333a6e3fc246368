//! Dense `f64` tensors, a reverse-mode tape with the operations needed by the
//! scheduling policy, Adam and JSON parameter checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod params;
pub mod tensor;

pub use adam::{Adam, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use error::{CheckpointError, ShapeError};
pub use graph::{EdgeIndex, Graph, Var};
pub use params::{Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
