//! In-memory feature corpora and minibatch assembly.
//!
//! Windows are gathered on demand from per-utterance frame matrices rather
//! than materialized, so a corpus costs `frames × 39` floats per stream.

use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::features::{gather_window, FeatureConfig, FeatureSequence, MfccExtractor, NormStats, Waveform};
use crate::io::{self, ContainerKind, Manifest};
use crate::network::Real;
use crate::simulate::SimUtterance;
use crate::{FEATURE_DIM, INPUT_CONTEXT, INPUT_DIM, TARGET_CONTEXT, TARGET_DIM};

/// Aligned noisy/clean feature matrices and frame labels of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub noisy: Array2<f32>,
    pub clean: Array2<f32>,
    pub labels: Vec<usize>,
}

impl Utterance {
    pub fn new(id: String, noisy: Array2<f32>, clean: Array2<f32>, labels: Vec<usize>) -> Result<Self> {
        let t = labels.len();
        if noisy.dim() != (t, FEATURE_DIM) || clean.dim() != (t, FEATURE_DIM) || t == 0 {
            return Err(Error::invalid(format!(
                "{id}: noisy {:?}, clean {:?} and {t} labels do not align",
                noisy.dim(),
                clean.dim()
            )));
        }
        Ok(Utterance {
            id,
            noisy,
            clean,
            labels,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.labels.len()
    }
}

/// One minibatch of windowed examples.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<F> {
    /// N × 819 noisy context windows.
    pub noisy: Array2<F>,
    /// N × 429 clean target windows.
    pub clean: Array2<F>,
    pub labels: Vec<usize>,
}

impl<F> Batch<F> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    /// `(utterance, frame)` of every global frame index.
    index: Vec<(u32, u32)>,
    pub num_classes: usize,
}

impl Corpus {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        let mut index = Vec::new();
        let mut num_classes = 0;
        for (u, utt) in utterances.iter().enumerate() {
            for t in 0..utt.num_frames() {
                index.push((u as u32, t as u32));
            }
            num_classes = num_classes.max(utt.labels.iter().max().map_or(0, |m| m + 1));
        }
        Ok(Corpus {
            utterances,
            index,
            num_classes,
        })
    }

    /// Extract features from simulated waveforms.
    pub fn from_simulation(utts: &[SimUtterance], feat: &FeatureConfig) -> Result<Self> {
        let ex = MfccExtractor::new(feat.clone())?;
        let utterances = utts
            .iter()
            .map(|u| {
                // Round through f32 exactly as the on-disk waveform container does.
                let stored = |w: &Waveform| Waveform::new(w.to_f32().iter().map(|&s| s as f64).collect(), w.sample_rate);
                let noisy = ex.extract(&stored(&u.noisy)?, &u.id)?;
                let clean = ex.extract(&stored(&u.clean)?, &u.id)?;
                Utterance::new(u.id.clone(), noisy.to_f32(), clean.to_f32(), u.labels.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(utterances)
    }

    /// Load a manifest whose noisy/clean entries are waveform or feature
    /// containers; waveforms are run through the MFCC front end.
    pub fn load(manifest_path: &Path, feat: &FeatureConfig) -> Result<Self> {
        let manifest = Manifest::read(manifest_path)?;
        if manifest.is_empty() {
            return Err(Error::invalid(format!("{}: empty manifest", manifest_path.display())));
        }
        let ex = MfccExtractor::new(feat.clone())?;
        let load_feats = |path: &Path, id: &str| -> Result<Array2<f32>> {
            let bytes = io::read_file(path)?;
            match io::sniff(path, &bytes)? {
                ContainerKind::Features => io::decode_features(path, &bytes),
                ContainerKind::Waveform => {
                    let (samples, rate) = io::decode_waveform(path, &bytes)?;
                    let w = Waveform::new(samples.iter().map(|&s| s as f64).collect(), rate)?;
                    Ok(ex.extract(&w, id)?.to_f32())
                }
            }
        };
        let utterances = manifest
            .entries
            .iter()
            .map(|e| {
                Utterance::new(
                    e.id.clone(),
                    load_feats(&e.noisy, &e.id)?,
                    load_feats(&e.clean, &e.id)?,
                    io::read_labels(&e.labels)?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(utterances)
    }

    pub fn num_frames(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn labels_of(&self, frames: &[usize]) -> Vec<usize> {
        frames
            .iter()
            .map(|&g| {
                let (u, t) = self.index[g];
                self.utterances[u as usize].labels[t as usize]
            })
            .collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.utterances.iter().flat_map(|u| u.labels.iter().copied()).collect()
    }

    fn rows<'a>(mats: impl Iterator<Item = &'a Array2<f32>>) -> Vec<Vec<f64>> {
        mats.flat_map(|m| m.rows().into_iter().map(|r| r.iter().map(|&v| v as f64).collect()))
            .collect()
    }

    /// Statistics of the noisy (input) and clean (target) streams.
    pub fn stats(&self) -> Result<(NormStats, NormStats)> {
        let noisy = Self::rows(self.utterances.iter().map(|u| &u.noisy));
        let clean = Self::rows(self.utterances.iter().map(|u| &u.clean));
        Ok((
            NormStats::compute(noisy.iter().map(|r| r.as_slice()))?,
            NormStats::compute(clean.iter().map(|r| r.as_slice()))?,
        ))
    }

    pub fn normalize(&mut self, input: &NormStats, target: &NormStats) {
        for u in &mut self.utterances {
            input.apply_f32(&mut u.noisy);
            target.apply_f32(&mut u.clean);
        }
    }

    /// Gather the windows of the given global frame indices.
    pub fn batch<F: Real>(&self, frames: &[usize]) -> Batch<F> {
        let n = frames.len();
        let mut noisy = Array2::zeros((n, INPUT_DIM));
        let mut clean = Array2::zeros((n, TARGET_DIM));
        let mut labels = Vec::with_capacity(n);
        for (row, &g) in frames.iter().enumerate() {
            let (u, t) = self.index[g];
            let utt = &self.utterances[u as usize];
            gather_window(
                utt.noisy.view(),
                t as usize,
                INPUT_CONTEXT / 2,
                noisy.row_mut(row).as_slice_mut().unwrap(),
            );
            gather_window(
                utt.clean.view(),
                t as usize,
                TARGET_CONTEXT / 2,
                clean.row_mut(row).as_slice_mut().unwrap(),
            );
            labels.push(utt.labels[t as usize]);
        }
        Batch {
            noisy,
            clean,
            labels,
        }
    }

    /// Contiguous chunks of global frame indices, for evaluation.
    pub fn chunks(&self, size: usize) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.num_frames())
            .step_by(size.max(1))
            .map(move |s| (s..(s + size).min(self.num_frames())).collect())
    }

    pub fn feature_sequences(&self) -> Result<Vec<(FeatureSequence, FeatureSequence)>> {
        self.utterances
            .iter()
            .map(|u| {
                Ok((
                    FeatureSequence::from_frames(u.noisy.mapv(|v| v as f64), u.id.clone())?,
                    FeatureSequence::from_frames(u.clean.mapv(|v| v as f64), u.id.clone())?,
                ))
            })
            .collect()
    }
}

/// Train/dev/test corpora standardized with training-set statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Corpus,
    pub dev: Corpus,
    pub test: Option<Corpus>,
    pub input_norm: NormStats,
    pub target_norm: NormStats,
    pub num_classes: usize,
}

impl Dataset {
    pub fn prepare(mut train: Corpus, mut dev: Corpus, mut test: Option<Corpus>) -> Result<Self> {
        if train.is_empty() || dev.is_empty() {
            return Err(Error::invalid("train and dev corpora must be non-empty"));
        }
        let train_ids: std::collections::HashSet<&str> =
            train.utterances.iter().map(|u| u.id.as_str()).collect();
        if dev.utterances.iter().any(|u| train_ids.contains(u.id.as_str())) {
            return Err(Error::invalid("train and dev corpora share utterances"));
        }
        let (input_norm, target_norm) = train.stats()?;
        train.normalize(&input_norm, &target_norm);
        dev.normalize(&input_norm, &target_norm);
        if let Some(t) = test.as_mut() {
            t.normalize(&input_norm, &target_norm);
        }
        let num_classes = [Some(&train), Some(&dev), test.as_ref()]
            .into_iter()
            .flatten()
            .map(|c| c.num_classes)
            .max()
            .unwrap_or(0);
        Ok(Dataset {
            train,
            dev,
            test,
            input_norm,
            target_norm,
            num_classes,
        })
    }

    /// The held-out corpus used for final summaries: test when present,
    /// otherwise dev.
    pub fn eval_corpus(&self) -> &Corpus {
        self.test.as_ref().unwrap_or(&self.dev)
    }
}

/// Frame-major view of a precomputed per-frame matrix, indexed like a
/// corpus (used for matched-training inputs).
pub fn gather_rows<F: Real>(source: ArrayView2<f32>, frames: &[usize]) -> Array2<F> {
    let mut out = Array2::zeros((frames.len(), source.ncols()));
    for (row, &g) in frames.iter().enumerate() {
        for (o, &v) in out.row_mut(row).iter_mut().zip(source.row(g)) {
            *o = F::from_f64_lossy(v as f64);
        }
    }
    out
}
