//! Order-guided disentangled representation learning for semi-supervised
//! binary classification over labelled sequences.
//!
//! The crate is `no_std` (it needs `alloc`) and holds everything that is pure
//! computation: the differentiation engine, the network, the losses, the
//! synthetic sequence benchmark, the training loops and the evaluation
//! helpers. File formats and the command line live in the `ordis` crate.

#![no_std]

extern crate alloc;

pub mod autodiff;
pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod metrics;
pub mod net;
pub mod objectives;
pub mod probe;
pub mod seqgen;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use tensor::Tensor;
