//! The capsule colorizer: feature detector, primary capsules, routed capsule
//! layer and dense decoder, plus losses and the training step.

mod capsule;
mod check;
mod config;
mod loss;
mod model;
mod params;
mod train;

use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::error::TensorError;

pub use capsule::{
    dynamic_routing, routing_backward, squash, squash_last_axis, squash_last_axis_backward, CapsuleSet, Routing,
    SQUASH_EPS,
};
pub use check::{model_gradcheck, model_gradcheck_with_step};
pub use config::{ColorCapsNetConfig, LossKind};
pub use loss::{hue_sector_targets, margin_loss, mse_loss, MARGIN_HIGH, MARGIN_LOW};
pub use model::{backward, build_model, forward, ConvLayer, DenseLayer, ForwardCache, ForwardOutput, ModelParams};
pub use params::{count_parameters, ParameterBreakdown};
pub use train::{loss_and_gradients, train_step, training_loss, LossAndGradients, Optimizer, StepOutput};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("weight import failed for {}: {detail}", names.join(", "))]
    Import { names: Vec<String>, detail: String },
    #[error("input out of domain: {0}")]
    Domain(String),
    #[error("batch mismatch: {0}")]
    BatchMismatch(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}
