//! From-scratch training and inference for OkanNet, a lightweight CNN for four-class
//! brain-tumor MRI classification (glioma, meningioma, no tumor, pituitary).
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`]: flat row-major tensors and the matmul/padding/argmax kernels.
//! - [`layers`]: hand-written forward/backward passes (conv, batch norm, ReLU, max pool,
//!   dense, dropout, residual) and He initialization.
//! - [`loss`] and [`optim`]: softmax cross-entropy and SGD with momentum.
//! - [`model`]: the OkanNet layer stack.
//! - [`data`]: folder-dataset scanning, decoding, bicubic resize, augmentation, batching.
//! - [`metrics`] and [`report`]: confusion matrix, macro metrics, CSV output.
//! - [`train`], [`checkpoint`], [`gradcheck`]: training loop, model files, gradient checks.
//! - [`runtime`]: worker-pool configuration from the environment.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod report;
pub mod runtime;
pub mod tensor;
pub mod train;

pub use error::{CheckpointError, Error, Result};
pub use tensor::{Scalar, Shape, Tensor};
