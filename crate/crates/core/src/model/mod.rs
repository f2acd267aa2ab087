//! The recurrent reconstruction network: configuration, parameters,
//! jitter-conditioned kernels, the per-frame step and checkpoints.

mod checkpoint;
mod config;
mod network;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, MLP_HIDDEN, MLP_LAYERS};
pub use network::{blend, init_carry, KernelCache, KernelPair, Model, StepOutput};
pub(crate) use network::{init_carry_graph, step_graph};
