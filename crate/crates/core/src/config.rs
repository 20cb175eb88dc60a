//! Experiment configuration: one TOML file with a section per module.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dataset};
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::io::{self, encode_labels, encode_waveform, write_atomic, Manifest, ManifestEntry};
use crate::network::NetConfig;
use crate::simulate::{simulate_utterance, ContaminationConfig, SimUtterance, Split, SynthConfig};
use crate::trainer::TrainConfig;

/// Number of utterances per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { train: 2000, dev: 200, test: 200 }
    }
}

impl CorpusConfig {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Dev => self.dev,
            Split::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub simulate: SynthConfig,
    pub contamination: ContaminationConfig,
    pub corpus: CorpusConfig,
    pub features: FeatureConfig,
    pub network: NetConfig,
    pub trainer: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_toml().as_bytes())
    }

    /// Per-section checks plus the cross-section constraints.
    pub fn validate(&self) -> Result<()> {
        self.simulate.validate()?;
        self.contamination.validate()?;
        self.network.validate()?;
        self.trainer.validate()?;
        crate::features::MfccExtractor::new(self.features.clone())?;
        let (s, f) = (&self.simulate, &self.features);
        if s.sample_rate != f.sample_rate || s.frame_length != f.frame_length || s.frame_shift != f.frame_shift {
            return Err(Error::Config(
                "simulate and features sections must agree on sample_rate, frame_length and frame_shift".into(),
            ));
        }
        if s.num_classes != self.network.num_classes {
            return Err(Error::Config(format!(
                "simulate.num_classes = {} but network.num_classes = {}",
                s.num_classes, self.network.num_classes
            )));
        }
        if self.corpus.train == 0 || self.corpus.dev == 0 {
            return Err(Error::Config("corpus.train and corpus.dev must be positive".into()));
        }
        Ok(())
    }

    pub fn simulate_split(&self, split: Split) -> Result<Vec<SimUtterance>> {
        (0..self.corpus.count(split))
            .map(|i| simulate_utterance(&self.simulate, &self.contamination, split, i))
            .collect()
    }

    /// Simulate, featurize and normalize all splits in memory.
    pub fn build_dataset(&self) -> Result<Dataset> {
        let corpus = |split| Corpus::from_simulation(&self.simulate_split(split)?, &self.features);
        let test = if self.corpus.test > 0 { Some(corpus(Split::Test)?) } else { None };
        Dataset::prepare(corpus(Split::Train)?, corpus(Split::Dev)?, test)
    }
}

/// Write the waveforms and labels of one split under `dir` and return the
/// path of its manifest (`<split>.list`).
pub fn write_split(dir: &Path, split: Split, utts: &[SimUtterance]) -> Result<PathBuf> {
    let wav = dir.join("wav");
    let lab = dir.join("lab");
    for d in [&wav, &lab] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut manifest = Manifest::default();
    for u in utts {
        let entry = ManifestEntry {
            id: u.id.clone(),
            noisy: wav.join(format!("{}_noisy.bin", u.id)),
            clean: wav.join(format!("{}_clean.bin", u.id)),
            labels: lab.join(format!("{}.txt", u.id)),
        };
        write_atomic(&entry.noisy, &encode_waveform(&u.noisy.to_f32(), u.noisy.sample_rate))?;
        write_atomic(&entry.clean, &encode_waveform(&u.clean.to_f32(), u.clean.sample_rate))?;
        write_atomic(&entry.labels, encode_labels(&u.labels).as_bytes())?;
        manifest.entries.push(entry);
    }
    let path = dir.join(format!("{}.list", split.name()));
    manifest.write(&path)?;
    Ok(path)
}

/// Replace the waveform paths of a manifest by feature containers written
/// under `out_dir/feat`, returning the new manifest.
pub fn extract_manifest(manifest_path: &Path, feat: &FeatureConfig, out_dir: &Path) -> Result<Manifest> {
    let manifest = Manifest::read(manifest_path)?;
    let corpus = Corpus::load(manifest_path, feat)?;
    let fdir = out_dir.join("feat");
    std::fs::create_dir_all(&fdir).map_err(|e| Error::io(&fdir, e))?;
    let mut out = Manifest::default();
    for (e, u) in manifest.entries.iter().zip(&corpus.utterances) {
        let noisy = fdir.join(format!("{}_noisy.feat", e.id));
        let clean = fdir.join(format!("{}_clean.feat", e.id));
        write_atomic(&noisy, &io::encode_features(&u.noisy))?;
        write_atomic(&clean, &io::encode_features(&u.clean))?;
        out.entries.push(ManifestEntry { id: e.id.clone(), noisy, clean, labels: e.labels.clone() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ExperimentConfig::from_toml("[contamination]\nt60 = 0.5\n[trainer]\nlambda = 0.1\n").unwrap();
        assert_eq!(cfg.contamination.t60, 0.5);
        assert_eq!(cfg.trainer.lambda, 0.1);
        assert_eq!(cfg.corpus.train, 2000);
    }

    #[test]
    fn unknown_keys_and_framing_mismatch_are_rejected() {
        assert!(ExperimentConfig::from_toml("[trainer]\nlamda = 0.1\n").is_err());
        assert!(ExperimentConfig::from_toml("[features]\nframe_shift = 80\n").is_err());
        assert!(ExperimentConfig::from_toml("[network]\nnum_classes = 5\n").is_err());
    }
}
