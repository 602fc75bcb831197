//! Adaptive latent-space tuning for encoder-decoder beam models.
//!
//! An encoder-decoder network maps an initial `(x, y)` beam image and a
//! handful of machine parameters to a stack of 2D phase-space projections.
//! Once the real machine drifts away from the training distribution, an
//! additive control vector in the latent space is tuned with bounded
//! extremum seeking, using only a single observable projection as feedback.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO:
//!
//! - [`axis`], [`image`], [`params`]: shared domain types and the image error metric.
//! - [`beamsim`]: analytic Gaussian-mixture beam oracle with linear transport,
//!   exact pixel-mass projections, dataset generation, drift and PCA shift diagnostics.
//! - [`net`]: strided-convolution encoder, transpose-convolution decoder,
//!   manual backpropagation and Adam training.
//! - [`es`]: bounded extremum seeking and its verification harnesses.
//! - [`tuner`]: the closed loop between trained decoder, measured projection and controller.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod axis;
pub mod beamsim;
pub mod error;
pub mod es;
pub mod image;
pub mod math;
pub mod net;
pub mod params;
pub mod rng;
pub mod tuner;

pub use axis::{enumerate_axis_pairs, Axis, AxisPair};
pub use error::{Error, Result};
pub use image::{mse, normalize, Extent, ImageGrid, ProjectionSet};
pub use params::{LatentVector, MachineParams, ParamRanges, N_PARAMS};
