use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

/// `ln(1000)`: amplitude decay exponent that reaches −60 dB at t = T60.
pub const T60_DECAY: f64 = 6.907_755_278_982_137;

/// Direct-to-reverberant energy ratio of generated responses: a distant
/// talker, with more energy in the tail than in the direct path.
pub const DEFAULT_DRR_DB: f64 = -6.0;

/// Room impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    pub t60: f64,
}

impl Rir {
    /// Single unit tap.
    pub fn identity(sample_rate: u32) -> Self {
        Rir {
            taps: vec![1.0],
            sample_rate,
            t60: f64::MIN_POSITIVE,
        }
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }
}

/// Amplitude envelope `exp(−ln(1000) t / T60)`.
pub fn decay_envelope(t: f64, t60: f64) -> f64 {
    (-T60_DECAY * t / t60).exp()
}

pub fn synth_rir(t60: f64, duration: f64, sample_rate: u32, seed: u64) -> Result<Rir> {
    synth_rir_with_drr(t60, duration, sample_rate, DEFAULT_DRR_DB, seed)
}

/// Unit direct path followed by exponentially decaying Gaussian noise, with
/// the tail scaled so that direct/tail energy equals `drr_db`.
pub fn synth_rir_with_drr(
    t60: f64,
    duration: f64,
    sample_rate: u32,
    drr_db: f64,
    seed: u64,
) -> Result<Rir> {
    if !(t60 > 0.0) || !t60.is_finite() {
        return Err(Error::invalid(format!("t60 must be positive, got {t60}")));
    }
    if !(duration >= t60 / 2.0) || !duration.is_finite() {
        return Err(Error::invalid(format!(
            "rir duration {duration} s is shorter than t60/2"
        )));
    }
    if sample_rate == 0 || !drr_db.is_finite() {
        return Err(Error::invalid("bad sample rate or direct-to-reverberant ratio"));
    }
    let len = ((duration * sample_rate as f64).round() as usize).max(2);
    let mut rng = rng::stream(seed, &[]);
    let mut taps = Vec::with_capacity(len);
    taps.push(1.0);
    for n in 1..len {
        let g: f64 = StandardNormal.sample(&mut rng);
        taps.push(g * decay_envelope(n as f64 / sample_rate as f64, t60));
    }
    let tail: f64 = taps[1..].iter().map(|t| t * t).sum();
    if tail > 0.0 {
        let scale = (10f64.powf(-drr_db / 10.0) / tail).sqrt();
        taps[1..].iter_mut().for_each(|t| *t *= scale);
    }
    Ok(Rir {
        taps,
        sample_rate,
        t60,
    })
}

/// Schroeder backward-integrated energy decay curve in dB relative to the
/// total energy.
pub fn schroeder_decay_db(taps: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut edc: Vec<f64> = taps
        .iter()
        .rev()
        .map(|t| {
            acc += t * t;
            acc
        })
        .collect();
    edc.reverse();
    let total = edc.first().copied().unwrap_or(0.0);
    edc.into_iter()
        .map(|e| 10.0 * (e.max(f64::MIN_POSITIVE) / total).log10())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_is_sixty_db_down_at_t60() {
        assert!((decay_envelope(0.7, 0.7) - 1e-3).abs() < 1e-15);
        assert_eq!(decay_envelope(0.0, 0.7), 1.0);
    }

    #[test]
    fn direct_path_leads_and_ratio_holds() {
        let rir = synth_rir_with_drr(0.5, 0.8, 16_000, 3.0, 11).unwrap();
        assert_eq!(rir.taps[0], 1.0);
        assert_eq!(rir.taps.len(), 12_800);
        let tail: f64 = rir.taps[1..].iter().map(|t| t * t).sum();
        assert!((10.0 * (1.0 / tail).log10() - 3.0).abs() < 1e-9);
        assert!(rir.taps.iter().all(|t| t.is_finite()));
    }

    #[test]
    fn tiny_t60_concentrates_energy_at_onset() {
        let rir = synth_rir(1e-4, 0.1, 16_000, 3).unwrap();
        let beyond: f64 = rir.taps[80..].iter().map(|t| t * t).sum();
        assert!(beyond < 1e-6 * rir.energy());
    }

    #[test]
    fn invalid_inputs() {
        assert!(synth_rir(0.0, 1.0, 16_000, 0).is_err());
        assert!(synth_rir(-1.0, 1.0, 16_000, 0).is_err());
        assert!(synth_rir(0.7, 0.3, 16_000, 0).is_err());
        assert!(synth_rir(f64::NAN, 1.0, 16_000, 0).is_err());
    }

    #[test]
    fn same_seed_same_taps() {
        assert_eq!(
            synth_rir(0.7, 1.0, 16_000, 8).unwrap(),
            synth_rir(0.7, 1.0, 16_000, 8).unwrap()
        );
    }

    #[test]
    fn schroeder_curve_starts_at_zero_and_decreases() {
        let rir = synth_rir(0.3, 0.5, 16_000, 2).unwrap();
        let edc = schroeder_decay_db(&rir.taps);
        assert_eq!(edc[0], 0.0);
        assert!(edc.windows(2).all(|w| w[1] <= w[0]));
    }
}
