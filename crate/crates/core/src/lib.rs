//! Neural temporal supersampling for rendered content.
//!
//! The pipeline upscales a jittered low-resolution frame sequence by
//! re-projecting the previous high-resolution output with engine motion
//! vectors and letting a small recurrent network predict a candidate frame
//! and a per-pixel blending mask.
//!
//! Module map:
//! - [`raster`]: rasters, convolution and resampling kernels, reverse-mode tape, Adam
//! - [`warp`]: jitter compensation, depth-informed motion dilation, re-projection
//! - [`model`]: network configuration, jitter-conditioned kernels, recurrent step, checkpoints
//! - [`data`]: raster files, dataset decoders, Halton jitter, manifests, clip sampling
//! - [`synth`]: procedural scenes with analytic ground truth
//! - [`train`]: L1 rollouts, optimizer loop, schedules
//! - [`eval`]: PSNR / SSIM / temporal stability, reports, profiling

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod model;
pub mod raster;
pub mod synth;
pub mod train;
pub mod warp;

pub use error::{Error, Result};
