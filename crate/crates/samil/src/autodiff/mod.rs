//! Minimal dense-tensor reverse-mode autodiff: enough machinery to train an
//! attention-pooled bag classifier, nothing more. Values are f64 end to end;
//! checkpoints quantize to f32 on disk.

pub mod checkpoint;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FLAG_PROJECTION_DISCARDED};
pub use optim::{cosine_lr, SgdConfig, SgdOptimizer};
pub use params::ParameterSet;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
