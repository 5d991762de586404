//! Spiking-network training and compression.
//!
//! The crate covers the whole hybrid pipeline for small convolutional
//! spiking networks:
//!
//! * [`snn`]: discrete-time LIF simulation with soft reset and Poisson input.
//! * [`train`]: ANN pre-training, percentile threshold balancing and
//!   surrogate-gradient backpropagation through time.
//! * [`spatial`]: PCA-driven width and depth reduction.
//! * [`temporal`]: gradual timestep reduction while training.
//! * [`quantize`]: per-layer K-means weight sharing.
//! * [`analysis`]: spike rates, operation counts, energy ratio and noise
//!   robustness.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the two concrete instantiations.

pub mod analysis;
pub mod data;
mod error;
pub mod quantize;
mod scalar;
pub mod snn;
pub mod spatial;
pub mod temporal;
pub mod train;

pub use error::{Result, SnnError};
pub use scalar::{cast_slice, Scalar};

pub type Network32 = snn::Network<f32>;
pub type Network64 = snn::Network<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type Dataset64 = data::Dataset<f64>;
pub type SpikeRecord32 = snn::SpikeRecord<f32>;
pub type Codebook32 = quantize::Codebook<f32>;
