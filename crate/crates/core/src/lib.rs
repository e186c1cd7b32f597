//! Elite-pixel selection for time-series radar interferometry.
//!
//! An "elite" pixel keeps a reliable phase history across an interferogram
//! stack and is worth carrying into deformation analysis. This crate builds
//! the whole desk-scale selection pipeline:
//!
//! - [`stack`] / [`patch`]: stack and mask file formats, 100×100 patch
//!   tiling with exact reassembly, temporal sampling, phase feature encoding;
//! - [`synth`]: deterministic synthetic scenes with known per-pixel class;
//! - [`selector`]: the statistical labeler (amplitude/coherence dispersion
//!   indices, nearest-PS Voronoi assignment, F-test acceptance);
//! - [`fdist`]: incomplete-beta numerics behind the F-test quantiles;
//! - [`nn`]: a from-scratch tensor core and the CIPS ConvLSTM segmentation
//!   network with hand-written backpropagation;
//! - [`train`]: differentiable F1 loss, Adam, early stopping, transfer;
//! - [`metrics`]: confusion counts, scores, and pixel densities;
//! - [`cli`]: the `elite-pixel` batch command line.
//!
//! The `book/` directory of the repository walks through the concepts; its
//! code snippets compile and run as doctests (see `src/guide.rs`).

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod fdist;
mod guide;
pub mod metrics;
pub mod nn;
pub mod patch;
pub mod selector;
pub mod stack;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
