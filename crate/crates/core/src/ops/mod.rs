//! Layer primitives with hand-written forward and backward passes.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod conv;
pub mod dense;

pub use activation::{relu, relu_backward, sigmoid, sigmoid_backward, softmax, softmax_backward};
pub use adam::{adam_step, AdamHyper, AdamState};
pub use batchnorm::{batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormGrads, BatchNormState, Mode};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads, ConvSpec};
pub use dense::{dense_backward, dense_forward, DenseGrads};
