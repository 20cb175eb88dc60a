//! Synthetic labelled corpus and its contamination with reverberation and
//! additive noise.

mod contaminate;
mod rir;
mod synth;

pub use contaminate::{
    contaminate, contaminate_components, convolve, convolve_direct, make_noise, mixing_gain,
    signal_power, snr_db, Contaminated, ContaminationConfig, NoiseKind,
};
pub use rir::{decay_envelope, schroeder_decay_db, synth_rir, synth_rir_with_drr, Rir, DEFAULT_DRR_DB, T60_DECAY};
pub use synth::{synth_clean_utterance, ClassSignature, SynthConfig};

use crate::features::Waveform;
use crate::rng;

/// Corpus split; part of every utterance's seed path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Dev => 1,
            Split::Test => 2,
        }
    }
}

/// A clean utterance, its contaminated version and frame labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimUtterance {
    pub id: String,
    pub clean: Waveform,
    pub noisy: Waveform,
    pub labels: Vec<usize>,
}

/// Generate utterance `index` of `split`. Each utterance owns its RNG
/// streams, derived from the corpus seed, so generation order is irrelevant.
pub fn simulate_utterance(
    synth: &SynthConfig,
    contam: &ContaminationConfig,
    split: Split,
    index: usize,
) -> crate::Result<SimUtterance> {
    let base = rng::derive_seed(synth.seed, &[split.index(), index as u64]);
    let (clean, labels) = synth_clean_utterance(synth, rng::derive_seed(base, &[0]))?;
    let rir = synth_rir_with_drr(
        contam.t60,
        contam.rir_duration(),
        synth.sample_rate,
        contam.drr_db,
        rng::derive_seed(base ^ contam.seed, &[1]),
    )?;
    let noisy = contaminate(&clean, &rir, contam, rng::derive_seed(base ^ contam.seed, &[2]))?;
    Ok(SimUtterance {
        id: format!("{}_{index:05}", split.name()),
        clean,
        noisy,
        labels,
    })
}
