//! Multilayer perceptrons on the tape, Adam, and binary checkpoints.

mod adam;
mod checkpoint;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, MAGIC};
pub use mlp::{Activation, Architecture, Layer, MlpParams, Role};

/// Fresh parameters for `role`, seeded from `stream`.
pub fn init_mlp(role: Role, arch: &Architecture, stream: &crate::toydata::rng::Stream) -> MlpParams {
    MlpParams::init(role, arch, stream)
}
