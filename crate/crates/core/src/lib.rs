//! Batch-normalized joint training of a cascaded speech enhancement network
//! and a frame-level phone classifier.
//!
//! The crate is organised as a pipeline:
//!
//! * [`simulate`] generates a labelled synthetic corpus and contaminates it
//!   with exponentially decaying reverberation and additive noise.
//! * [`features`] turns waveforms into 39-dimensional MFCC sequences and
//!   windows them into enhancement/classification training examples.
//! * [`network`] holds the hand-differentiated layer stacks (linear, batch
//!   normalization, ReLU, dropout, linear and softmax heads).
//! * [`trainer`] runs minibatch SGD with the weighted joint update, the
//!   learning-rate schedule, and the baseline system modes.
//! * [`eval`] computes frame-level metrics and writes curve/summary tables.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod io;
pub mod network;
pub mod rng;
pub mod simulate;
pub mod trainer;

pub use error::{Error, Result};

/// Number of cepstral features per frame (13 static + Δ + ΔΔ).
pub const FEATURE_DIM: usize = 39;
/// Frames of left+right context fed to the enhancement network.
pub const INPUT_CONTEXT: usize = 21;
/// Frames predicted by the enhancement network.
pub const TARGET_CONTEXT: usize = 11;
/// Width of the enhancement input window.
pub const INPUT_DIM: usize = INPUT_CONTEXT * FEATURE_DIM;
/// Width of the enhancement output / classifier input window.
pub const TARGET_DIM: usize = TARGET_CONTEXT * FEATURE_DIM;
