//! Robust low-rank regression for order-3 tensors.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod huber;
pub mod init;
pub mod optimizer;
pub mod samples;
pub mod simulation;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use samples::SampleSet;
pub use tensor::{Dims, Matrix, Ranks, Tensor3, TuckerFactors};
