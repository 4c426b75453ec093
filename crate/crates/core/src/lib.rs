//! Spiking-reservoir classification of multichannel EEG-like epochs.
//!
//! The pipeline runs in five stages:
//!
//! ```text
//! Recording ──resample──bandpass──epoch──reject──re-reference──▶ Epochs
//! Epochs ──normalize_unit──bsa_encode──▶ input SpikeRaster (channels × ticks)
//! input raster ──simulate (frozen, adapted LIF reservoir)──▶ reservoir raster
//! reservoir raster ──frame_rates (200 ms)──featurize──▶ feature vector
//! features ──ridge readout (one-hot, argmax)──▶ class
//! ```
//!
//! [`experiment`] wires the stages into stratified k-fold cross-validation,
//! electrode ranking and subset studies, and [`datagen`] produces labelled
//! synthetic corpora with known ground truth.

pub mod config;
pub mod datagen;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod raster;
pub mod readout;
pub mod reservoir;
pub mod signal;
pub mod util;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use raster::SpikeRaster;
