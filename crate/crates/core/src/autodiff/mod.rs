//! Dense `f64` tensors, a reverse-mode tape, optimizers and checkpoints.

mod batch;
mod checkpoint;
pub mod gradcheck;
mod optim;
mod params;
mod tape;
mod tensor;

pub use batch::accumulate_parallel;
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use optim::{clip_global_norm, Algorithm, Optimizer, OptimizerConfig, StepReport};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{Axis, Tape, Var};
pub use tensor::{sigmoid, softmax, Tensor};
