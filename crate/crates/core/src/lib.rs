//! Point-wise replacements for normalization layers in transformers.
//!
//! The crate bundles a small reverse-mode autodiff engine, a catalog of
//! S-shaped candidate functions with the transformations used to study their
//! shape properties, the LayerNorm / RMSNorm / DyT / Derf layers, a numeric
//! property classifier, and a desk-scale transformer harness for running
//! function searches and property sweeps.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod funcs;
pub mod gradcheck;
pub mod harness;
pub mod layers;
pub mod model;
pub mod numeric;
pub mod optim;
pub mod props;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
