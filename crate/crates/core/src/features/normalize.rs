use serde::{Deserialize, Serialize};

use super::FeatureSequence;
use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-8;

/// Per-dimension standardization statistics estimated on a training corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Two-pass population mean/variance over every frame of every sequence.
    pub fn compute<'a, I>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]> + Clone,
    {
        let mut count = 0usize;
        let mut mean: Vec<f64> = Vec::new();
        for row in rows.clone() {
            if mean.is_empty() {
                mean = vec![0.0; row.len()];
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::invalid("cannot estimate statistics from zero frames"));
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; mean.len()];
        for row in rows {
            for ((acc, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *acc += d * d;
            }
        }
        let std = var
            .into_iter()
            .enumerate()
            .map(|(d, v)| {
                let v = v / count as f64;
                if v < VARIANCE_FLOOR {
                    log::warn!("feature dimension {d} has variance {v:.3e}; flooring at {VARIANCE_FLOOR:e}");
                    VARIANCE_FLOOR.sqrt()
                } else {
                    v.sqrt()
                }
            })
            .collect();
        Ok(NormStats { mean, std })
    }

    pub fn from_sequences(seqs: &[FeatureSequence]) -> Result<Self> {
        // rows are only contiguous in standard layout
        let frames: Vec<_> = seqs.iter().map(|s| s.frames.as_standard_layout()).collect();
        let rows: Vec<&[f64]> = frames
            .iter()
            .flat_map(|f| f.rows().into_iter().map(|r| r.to_slice().unwrap()))
            .collect();
        Self::compute(rows.iter().copied())
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_row(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply(&self, seq: &FeatureSequence) -> FeatureSequence {
        let mut out = seq.clone();
        for mut row in out.frames.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn apply_f32(&self, frames: &mut ndarray::Array2<f32>) {
        for mut row in frames.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = ((*v as f64 - m) / s) as f32;
            }
        }
    }
}

/// Standardize a corpus to zero mean and unit variance per dimension and
/// return the statistics for reuse on held-out data.
pub fn normalize_features(seqs: &[FeatureSequence]) -> Result<(Vec<FeatureSequence>, NormStats)> {
    let stats = NormStats::from_sequences(seqs)?;
    Ok((seqs.iter().map(|s| stats.apply(s)).collect(), stats))
}
