//! Differentiable models, the penalized training objective and a
//! deterministic mini-batch trainer.

mod adam;
mod checkpoint;
mod model;
mod regularizer;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION};
pub use model::{predict, Architecture, ForwardPass, Layer, Link, ModelParams};
pub use regularizer::{regularizer, RegularizerKernels, RegularizerValue};
pub use train::{
    fit_kernels, objective, objective_gradient, train, Batch, EpochLog, Loss, ObjectiveValue,
    TrainConfig, TrainLog,
};
