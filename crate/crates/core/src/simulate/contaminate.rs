use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::rir::{Rir, DEFAULT_DRR_DB};
use crate::error::{Error, Result};
use crate::features::Waveform;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    White,
    /// Low-passed noise under a slow random amplitude modulation.
    BabbleLike,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "babble-like" | "babble" => Ok(NoiseKind::BabbleLike),
            other => Err(Error::Config(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContaminationConfig {
    pub t60: f64,
    /// Utterance-wide SNR; `inf` disables the noise path.
    pub snr_db: f64,
    pub noise_kind: NoiseKind,
    pub drr_db: f64,
    /// Impulse response length in seconds; defaults to 1.5 × t60.
    pub rir_seconds: Option<f64>,
    pub seed: u64,
}

impl Default for ContaminationConfig {
    fn default() -> Self {
        ContaminationConfig {
            t60: 0.7,
            snr_db: 10.0,
            noise_kind: NoiseKind::BabbleLike,
            drr_db: DEFAULT_DRR_DB,
            rir_seconds: None,
            seed: 0,
        }
    }
}

impl ContaminationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t60 > 0.0) || !self.t60.is_finite() {
            return Err(Error::Config("t60 must be positive".into()));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::Config("snr_db must be a number or +inf".into()));
        }
        if let Some(d) = self.rir_seconds {
            if !(d >= self.t60 / 2.0) {
                return Err(Error::Config("rir_seconds must be at least t60/2".into()));
            }
        }
        Ok(())
    }

    pub fn rir_duration(&self) -> f64 {
        self.rir_seconds.unwrap_or(1.5 * self.t60)
    }
}

pub fn signal_power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

pub fn snr_db(signal: &[f64], noise: &[f64]) -> f64 {
    10.0 * (signal_power(signal) / signal_power(noise)).log10()
}

/// Gain α such that `10 log10(P_signal / P(α noise)) = snr_db`.
pub fn mixing_gain(signal: &[f64], noise: &[f64], snr_db: f64) -> Result<f64> {
    if snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    let ps = signal_power(signal);
    let pn = signal_power(noise);
    if !(ps > 0.0) {
        return Err(Error::invalid("signal has zero power"));
    }
    if !(pn > 0.0) {
        return Err(Error::invalid("noise has zero power"));
    }
    Ok((ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// Full linear convolution by direct summation.
pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, &xv) in x.iter().enumerate() {
        for (j, &hv) in h.iter().enumerate() {
            y[i + j] += xv * hv;
        }
    }
    y
}

/// Full linear convolution via FFT.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    if x.len().min(h.len()) <= 32 {
        return convolve_direct(x, h);
    }
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let pad = |v: &[f64]| {
        let mut b = vec![Complex::new(0.0, 0.0); n];
        for (o, &s) in b.iter_mut().zip(v) {
            o.re = s;
        }
        b
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n as f64;
    a[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Unit-variance noise of the requested kind.
pub fn make_noise(kind: NoiseKind, len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[]);
    let mut out: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    if kind == NoiseKind::BabbleLike {
        let rate = sample_rate as f64;
        // one-pole low-pass around 1 kHz for a speech-like tilt
        let a = (-2.0 * PI * 1000.0 / rate).exp();
        let mut y = 0.0;
        for v in out.iter_mut() {
            y = (1.0 - a) * *v + a * y;
            *v = y;
        }
        let period = rng.random_range(0.5..2.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        let depth = rng.random_range(0.5..0.9);
        for (n, v) in out.iter_mut().enumerate() {
            let t = n as f64 / rate;
            *v *= 1.0 + depth * (2.0 * PI * t / period + phase).sin();
        }
    }
    let p = signal_power(&out);
    if p > 0.0 {
        let s = 1.0 / p.sqrt();
        out.iter_mut().for_each(|v| *v *= s);
    }
    out
}

/// Reverberant signal, the scaled noise added to it, and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Contaminated {
    pub reverberant: Vec<f64>,
    pub noise: Vec<f64>,
    pub mixture: Vec<f64>,
    pub gain: f64,
}

pub fn contaminate_components(
    clean: &Waveform,
    rir: &Rir,
    cfg: &ContaminationConfig,
    seed: u64,
) -> Result<Contaminated> {
    clean.validate()?;
    if clean.sample_rate != rir.sample_rate {
        return Err(Error::invalid(format!(
            "sample rate mismatch: clean {} Hz, rir {} Hz",
            clean.sample_rate, rir.sample_rate
        )));
    }
    if !(signal_power(&clean.samples) > 0.0) {
        return Err(Error::invalid("clean waveform has zero power"));
    }
    let mut reverberant = convolve(&clean.samples, &rir.taps);
    reverberant.truncate(clean.len());
    if cfg.snr_db == f64::INFINITY {
        return Ok(Contaminated {
            mixture: reverberant.clone(),
            noise: vec![0.0; reverberant.len()],
            reverberant,
            gain: 0.0,
        });
    }
    let raw = make_noise(cfg.noise_kind, reverberant.len(), clean.sample_rate, seed);
    let gain = mixing_gain(&reverberant, &raw, cfg.snr_db)?;
    let noise: Vec<f64> = raw.iter().map(|v| gain * v).collect();
    let mixture = reverberant.iter().zip(&noise).map(|(s, n)| s + n).collect();
    Ok(Contaminated {
        reverberant,
        noise,
        mixture,
        gain,
    })
}

/// `(clean ∗ rir) + α·noise`, truncated to the clean length.
pub fn contaminate(
    clean: &Waveform,
    rir: &Rir,
    cfg: &ContaminationConfig,
    seed: u64,
) -> Result<Waveform> {
    let c = contaminate_components(clean, rir, cfg, seed)?;
    Waveform::new(c.mixture, clean.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::synth_rir;
    use proptest::prelude::{prop_assert, prop_assume, proptest, ProptestConfig};

    fn wave(seed: u64, len: usize) -> Waveform {
        let mut rng = rng::stream(seed, &[]);
        Waveform::new((0..len).map(|_| rng.random_range(-1.0..1.0)).collect(), 16_000).unwrap()
    }

    #[test]
    fn equal_power_at_zero_db_gives_unit_gain() {
        let s = wave(1, 4000).samples;
        let mut n = wave(2, 4000).samples;
        let k = (signal_power(&s) / signal_power(&n)).sqrt();
        n.iter_mut().for_each(|v| *v *= k);
        assert!((mixing_gain(&s, &n, 0.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn identity_rir_without_noise_is_passthrough() {
        let clean = wave(3, 1000);
        let cfg = ContaminationConfig {
            snr_db: f64::INFINITY,
            ..Default::default()
        };
        let out = contaminate(&clean, &Rir::identity(16_000), &cfg, 0).unwrap();
        assert_eq!(out, clean);
    }

    #[test]
    fn disabled_noise_equals_convolution() {
        let clean = wave(4, 3000);
        let rir = synth_rir(0.05, 0.05, 16_000, 1).unwrap();
        let cfg = ContaminationConfig {
            snr_db: f64::INFINITY,
            ..Default::default()
        };
        let out = contaminate(&clean, &rir, &cfg, 0).unwrap();
        let mut expect = convolve(&clean.samples, &rir.taps);
        expect.truncate(clean.len());
        assert_eq!(out.samples, expect);
    }

    #[test]
    fn fft_convolution_matches_direct_sum() {
        let x = wave(5, 700).samples;
        let h = wave(6, 300).samples;
        let a = convolve(&x, &h);
        let b = convolve_direct(&x, &h);
        assert_eq!(a.len(), 999);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn measured_snr_matches_request() {
        let clean = wave(7, 8000);
        let rir = synth_rir(0.2, 0.3, 16_000, 2).unwrap();
        for kind in [NoiseKind::White, NoiseKind::BabbleLike] {
            for snr in [-5.0, 0.0, 10.0, 25.0] {
                let cfg = ContaminationConfig {
                    snr_db: snr,
                    noise_kind: kind,
                    ..Default::default()
                };
                let c = contaminate_components(&clean, &rir, &cfg, 9).unwrap();
                let measured = snr_db(&c.reverberant, &c.noise);
                assert!((measured - snr).abs() < 0.1, "{kind:?} {snr}: {measured}");
                assert_eq!(c.mixture.len(), clean.len());
            }
        }
    }

    #[test]
    fn zero_power_or_mismatched_input_is_rejected() {
        let silent = Waveform::new(vec![0.0; 100], 16_000).unwrap();
        let cfg = ContaminationConfig::default();
        assert!(contaminate(&silent, &Rir::identity(16_000), &cfg, 0).is_err());
        assert!(contaminate(&wave(1, 100), &Rir::identity(8_000), &cfg, 0).is_err());
    }

    #[test]
    fn babble_noise_is_non_stationary() {
        let n = make_noise(NoiseKind::BabbleLike, 64_000, 16_000, 4);
        let block_power: Vec<f64> = n.chunks(4000).map(signal_power).collect();
        let max = block_power.iter().cloned().fold(0.0, f64::max);
        let min = block_power.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min > 2.0);
        assert!((signal_power(&n) - 1.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn noiseless_contamination_is_linear(sa in 0u64..1000, sb in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
            prop_assume!(a.abs() > 0.1 && b.abs() > 0.1);
            let x = wave(sa, 1500);
            let y = wave(sb + 5000, 1500);
            let rir = synth_rir(0.05, 0.06, 16_000, 3).unwrap();
            let cfg = ContaminationConfig { snr_db: f64::INFINITY, ..Default::default() };
            let combo = Waveform::new(
                x.samples.iter().zip(&y.samples).map(|(p, q)| a * p + b * q).collect(),
                16_000,
            ).unwrap();
            let lhs = contaminate(&combo, &rir, &cfg, 0).unwrap();
            let ox = contaminate(&x, &rir, &cfg, 0).unwrap();
            let oy = contaminate(&y, &rir, &cfg, 0).unwrap();
            for i in 0..lhs.len() {
                prop_assert!((lhs.samples[i] - (a * ox.samples[i] + b * oy.samples[i])).abs() < 1e-9);
            }
        }
    }
}
