//! From-scratch CNN pipeline for staging dementia from brain MRI slices.
//!
//! The crate trains a small convolutional network over four ordinal classes
//! (non-demented, very mild, mild, moderate) with nothing but hand-written
//! numerics: a dense tensor type, forward/backward layer implementations,
//! Adam, image augmentation, dataset plumbing, and a thin CLI. Everything
//! stochastic flows from one master seed, so runs are reproducible to the
//! byte, including under internal parallelism.
//!
//! Start with the `examples/` directory for runnable tours of each part:
//! tensors and gradients, augmentation, dataset splits, training, and
//! checkpoints.

pub mod augment;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod model;
pub mod nn;
pub mod optim;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
