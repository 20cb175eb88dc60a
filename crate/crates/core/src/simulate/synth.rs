use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{frame_count, hz_to_mel, mel_to_hz, Waveform};
use crate::rng;

/// Parameters of the synthetic phone-like corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub utterance_seconds: f64,
    /// Shortest segment, in 10 ms frames.
    pub segment_min_frames: usize,
    /// Longest segment, in 10 ms frames.
    pub segment_max_frames: usize,
    pub sample_rate: u32,
    /// Analysis framing the labels are aligned with, in samples.
    pub frame_length: usize,
    pub frame_shift: usize,
    /// Relative frequency jitter applied per segment.
    pub jitter: f64,
    /// Segment gain spread in dB (uniform in ±gain_spread_db).
    pub gain_spread_db: f64,
    /// Corpus seed: fixes class signatures and every utterance stream.
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 20,
            utterance_seconds: 2.0,
            segment_min_frames: 5,
            segment_max_frames: 15,
            sample_rate: 16_000,
            frame_length: 400,
            frame_shift: 160,
            jitter: 0.08,
            gain_spread_db: 6.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.segment_min_frames < 3 || self.segment_max_frames < self.segment_min_frames {
            return Err(Error::Config(
                "segment lengths must satisfy 3 <= min <= max".into(),
            ));
        }
        if self.sample_rate == 0 || self.frame_shift == 0 || self.frame_length == 0 {
            return Err(Error::Config("sample rate and framing must be positive".into()));
        }
        let samples = self.num_samples();
        if samples < self.frame_length {
            return Err(Error::Config("utterances shorter than one frame".into()));
        }
        if !(0.0..0.5).contains(&self.jitter) || self.gain_spread_db < 0.0 {
            return Err(Error::Config("jitter must lie in [0, 0.5) and gain spread be >= 0".into()));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.utterance_seconds * self.sample_rate as f64).round() as usize
    }

    pub fn num_frames(&self) -> usize {
        frame_count(self.num_samples(), self.frame_length, self.frame_shift)
    }

    /// Class signatures are a function of the corpus seed only, so train,
    /// dev and test share one phone inventory.
    pub fn signatures(&self) -> Vec<ClassSignature> {
        let mut rng = rng::stream(self.seed, &[u64::MAX]);
        let lo = hz_to_mel(150.0);
        let hi = hz_to_mel(0.4 * self.sample_rate as f64);
        (0..self.num_classes)
            .map(|_| {
                let mut freqs = [0.0; 3];
                let mut amps = [0.0; 3];
                for j in 0..3 {
                    freqs[j] = mel_to_hz(rng.random_range(lo..hi));
                    amps[j] = rng.random_range(0.3..1.0);
                }
                ClassSignature {
                    freqs,
                    amps,
                    noise_center: mel_to_hz(rng.random_range(lo..hi)),
                    noise_gain: rng.random_range(0.1..0.4),
                }
            })
            .collect()
    }
}

/// Spectral signature of one synthetic phone class: three partials plus a
/// band of resonator-filtered noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSignature {
    pub freqs: [f64; 3],
    pub amps: [f64; 3],
    pub noise_center: f64,
    pub noise_gain: f64,
}

const OUTPUT_SCALE: f64 = 0.1;
const RESONATOR_RADIUS: f64 = 0.97;

fn render_segment<R: Rng>(
    sig: &ClassSignature,
    cfg: &SynthConfig,
    len: usize,
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    let rate = cfg.sample_rate as f64;
    let gain = 10f64.powf(rng.random_range(-cfg.gain_spread_db..=cfg.gain_spread_db) / 20.0);
    let mut partials = [(0.0, 0.0, 0.0); 3];
    for (j, p) in partials.iter_mut().enumerate() {
        let f = sig.freqs[j] * (1.0 + rng.random_range(-cfg.jitter..=cfg.jitter));
        *p = (2.0 * PI * f / rate, rng.random_range(0.0..2.0 * PI), sig.amps[j]);
    }
    // two-pole resonator at the class noise band, unit peak gain
    let theta = 2.0 * PI * sig.noise_center / rate;
    let r = RESONATOR_RADIUS;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let norm = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
    let (mut y1, mut y2) = (0.0, 0.0);
    for n in 0..len {
        let x: f64 = StandardNormal.sample(rng);
        let y = norm * x + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        let tonal: f64 = partials
            .iter()
            .map(|&(w, ph, a)| a * (w * n as f64 + ph).sin())
            .sum();
        out.push(OUTPUT_SCALE * gain * (tonal / 3.0 + sig.noise_gain * y));
    }
}

/// One clean utterance and its per-frame labels.
///
/// The utterance is a run of random-length segments, each rendered from the
/// signature of a random class (never the previous one). Frame `t` is
/// labelled with the class active at the centre sample of its analysis
/// window, on the same framing grid the MFCC front end uses.
pub fn synth_clean_utterance(cfg: &SynthConfig, seed: u64) -> Result<(Waveform, Vec<usize>)> {
    cfg.validate()?;
    let signatures = cfg.signatures();
    synth_with_signatures(cfg, &signatures, seed)
}

pub(crate) fn synth_with_signatures(
    cfg: &SynthConfig,
    signatures: &[ClassSignature],
    seed: u64,
) -> Result<(Waveform, Vec<usize>)> {
    let mut rng = rng::stream(seed, &[]);
    let total = cfg.num_samples();
    let hops = total.div_ceil(cfg.frame_shift);
    let mut hop_class = Vec::with_capacity(hops + cfg.segment_max_frames);
    let mut samples = Vec::with_capacity(total + cfg.segment_max_frames * cfg.frame_shift);
    let mut prev = usize::MAX;
    while hop_class.len() < hops {
        let frames = rng.random_range(cfg.segment_min_frames..=cfg.segment_max_frames);
        let class = loop {
            let c = rng.random_range(0..cfg.num_classes);
            if c != prev {
                break c;
            }
        };
        prev = class;
        hop_class.extend(std::iter::repeat_n(class, frames));
        render_segment(
            &signatures[class],
            cfg,
            frames * cfg.frame_shift,
            &mut rng,
            &mut samples,
        );
    }
    samples.truncate(total);
    let labels = (0..cfg.num_frames())
        .map(|t| hop_class[(t * cfg.frame_shift + cfg.frame_length / 2) / cfg.frame_shift])
        .collect();
    Ok((Waveform::new(samples, cfg.sample_rate)?, labels))
}
