//! Allocation-only core of the leafgraph pipeline.
//!
//! Everything in this crate is pure computation over in-memory buffers:
//! dense tensors and a seekable PRNG, image decoding and augmentation,
//! feature stores and their byte codecs, cosine-similarity graphs with
//! neighbor sampling, hand-differentiated GraphSAGE / GCN layers with Adam,
//! the four ablation architectures, classification metrics and CAM heatmaps.
//!
//! Filesystem access, configuration, the CLI and the HTTP service live in the
//! `leafgraph` companion crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod graph;
pub mod image;
pub mod model;
pub mod nn;
pub mod numerics;

mod bytes;
mod math;

pub use error::{Error, Result};
pub use numerics::{Rng, Tensor};
