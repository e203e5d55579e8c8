//! Reduce (or raise) how strongly an image region attracts visual
//! attention by optimizing constrained editing operators through a
//! differentiable saliency model.
//!
//! The pieces, bottom to top:
//!
//! - [`diffcore`]: a fixed-tape reverse-mode autodiff engine over
//!   image-shaped tensors.
//! - [`colorvision`]: differentiable sRGB/CIELab conversion and the
//!   pluggable saliency backend, with a built-in multi-scale
//!   center-surround predictor.
//! - [`operators`]: the editing operators (chroma-grid recolor, control
//!   point warp, small convnet, masked additive noise) plus a non-learned
//!   surround-color baseline and the total-variation regularizer.
//! - [`objective`]: the masked saliency + similarity losses, Adam, and the
//!   optimization loop.
//! - [`pipeline`]: automatic distractor segmentation, per-region operator
//!   selection, frame-sequence application and the reduction metric.

pub mod colorvision;
pub mod diffcore;
pub mod objective;
pub mod operators;
pub mod pipeline;
pub mod synthetic;

pub use diffcore::{Graph, NodeId, Shape, Tensor};
