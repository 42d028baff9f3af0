//! Capsule-network colorization of small grayscale patches.
//!
//! The crate is organised bottom-up: [`tensor`] and [`ops`] provide dense
//! arithmetic with hand-written gradients, [`capsnet`] assembles the model,
//! and [`colorspace`], [`patches`], [`metrics`], [`netpbm`], [`data`] and
//! [`checkpoint`] cover the surrounding image pipeline.

pub mod capsnet;
pub mod checkpoint;
pub mod colorspace;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod netpbm;
pub mod ops;
pub mod patches;
pub mod tensor;

pub use error::TensorError;
pub use tensor::{Scalar, Tensor};
