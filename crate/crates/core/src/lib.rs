//! Deep robust watermarking of triangle meshes.
//!
//! A graph-convolutional embedder displaces mesh vertices to carry a bit
//! string; an extractor recovers the bits from a possibly attacked copy of
//! the mesh without access to the original. Both networks are trained
//! jointly through differentiable attack layers (rotation, Gaussian noise,
//! Laplacian smoothing, cropping) under a curvature-consistency loss.

pub mod attacks;
pub mod diff;
mod error;
pub mod graph;
pub mod mesh;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod train;
pub mod watermark;

pub use error::{Error, Result};
