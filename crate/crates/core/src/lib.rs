//! Lightweight neural unsigned distance fields.
//!
//! A 3D convolutional encoder turns a voxelized sparse point cloud into a
//! four-level feature pyramid; a small pointwise decoder maps trilinearly
//! interpolated features to an unsigned distance. Dense clouds are produced
//! by repeatedly projecting samples along the negative field gradient.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod densify;
pub mod error;
pub mod eval;
pub mod field;
pub mod geometry;
pub mod gradcheck;
pub mod model;
pub mod ops;
pub mod optim;
pub mod sampling;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
