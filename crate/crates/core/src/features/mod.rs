//! Waveform → 39-dimensional MFCC sequences, and context windowing into
//! training examples.

mod mfcc;
mod normalize;
mod window;

pub use mfcc::{
    append_deltas, dct_matrix, delta, extract_mfcc, frame_count, hz_to_mel, mel_filterbank,
    mel_to_hz, FeatureConfig, MfccExtractor,
};
pub use normalize::{normalize_features, NormStats, VARIANCE_FLOOR};
pub use window::{gather_window, window_examples, TrainingExample};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::FEATURE_DIM;

/// Mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let w = Waveform {
            samples,
            sample_rate,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.samples.iter().map(|&s| s as f32).collect()
    }
}

/// T×39 matrix of MFCC frames (13 static, 13 Δ, 13 ΔΔ).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f64>,
    /// Seconds between frame starts.
    pub frame_shift: f64,
    /// Seconds covered by one analysis window.
    pub frame_length: f64,
    pub source_id: String,
}

impl FeatureSequence {
    pub fn new(
        frames: Array2<f64>,
        frame_shift: f64,
        frame_length: f64,
        source_id: impl Into<String>,
    ) -> Result<Self> {
        let seq = FeatureSequence {
            frames,
            frame_shift,
            frame_length,
            source_id: source_id.into(),
        };
        seq.validate()?;
        Ok(seq)
    }

    /// Wrap a bare matrix with the default 10 ms / 25 ms framing.
    pub fn from_frames(frames: Array2<f64>, source_id: impl Into<String>) -> Result<Self> {
        Self::new(frames, 0.010, 0.025, source_id)
    }

    pub fn validate(&self) -> Result<()> {
        let (t, d) = self.frames.dim();
        if d != FEATURE_DIM {
            return Err(Error::invalid(format!(
                "{}: feature sequence has {d} columns, expected {FEATURE_DIM}",
                self.source_id
            )));
        }
        if t == 0 {
            return Err(Error::invalid(format!("{}: empty feature sequence", self.source_id)));
        }
        if self.frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{}: non-finite feature", self.source_id)));
        }
        Ok(())
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn to_f32(&self) -> Array2<f32> {
        self.frames.mapv(|v| v as f32)
    }
}
