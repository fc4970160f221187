//! Reference implementations of geometry losses, evaluation metrics, and a
//! ray-cast ground-truth generator for human depth and normal estimation.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod align;
pub mod error;
pub mod features;
pub mod grids;
pub mod losses;
pub mod metrics;
pub mod synth;

pub use error::{Error, Result};
