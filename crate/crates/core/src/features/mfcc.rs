use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{FeatureSequence, Waveform};
use crate::error::{Error, Result};
use crate::FEATURE_DIM;

/// MFCC front-end parameters. Defaults give 25 ms frames every 10 ms at
/// 16 kHz, 23 HTK-mel filters from 64 Hz to Nyquist and 13 cepstra (c0..c12).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub sample_rate: u32,
    /// Analysis window in samples.
    pub frame_length: usize,
    /// Hop in samples.
    pub frame_shift: usize,
    pub fft_size: usize,
    pub num_filters: usize,
    pub low_freq: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub high_freq: Option<f64>,
    pub num_ceps: usize,
    pub pre_emphasis: f64,
    pub log_floor: f64,
    /// Half-width of the delta regression window.
    pub delta_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            sample_rate: 16_000,
            frame_length: 400,
            frame_shift: 160,
            fft_size: 512,
            num_filters: 23,
            low_freq: 64.0,
            high_freq: None,
            num_ceps: 13,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
            delta_window: 2,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 || self.frame_length == 0 || self.frame_shift == 0 {
            return Err(Error::Config("sample rate and framing must be positive".into()));
        }
        if self.fft_size < self.frame_length {
            return Err(Error::Config("fft_size must cover the frame length".into()));
        }
        if self.num_ceps * 3 != FEATURE_DIM {
            return Err(Error::Config(format!(
                "num_ceps = {} does not give {FEATURE_DIM} features with deltas",
                self.num_ceps
            )));
        }
        if self.num_ceps > self.num_filters {
            return Err(Error::Config("num_ceps exceeds num_filters".into()));
        }
        if self.delta_window == 0 {
            return Err(Error::Config("delta_window must be at least 1".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(0.0..nyquist).contains(&self.low_freq) || self.high_freq() <= self.low_freq {
            return Err(Error::Config("filterbank edges out of range".into()));
        }
        Ok(())
    }

    pub fn high_freq(&self) -> f64 {
        self.high_freq
            .unwrap_or(self.sample_rate as f64 / 2.0)
            .min(self.sample_rate as f64 / 2.0)
    }
}

/// Frames produced for `len` samples: `1 + floor((len - frame_length) / shift)`,
/// or zero when the signal is shorter than one frame.
pub fn frame_count(len: usize, frame_length: usize, frame_shift: usize) -> usize {
    if len < frame_length {
        0
    } else {
        1 + (len - frame_length) / frame_shift
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, equally spaced on the mel axis, evaluated at the
/// `fft_size / 2 + 1` non-negative DFT bins. Rows are filters.
pub fn mel_filterbank(cfg: &FeatureConfig) -> Array2<f64> {
    let bins = cfg.fft_size / 2 + 1;
    let lo = hz_to_mel(cfg.low_freq);
    let hi = hz_to_mel(cfg.high_freq());
    let step = (hi - lo) / (cfg.num_filters + 1) as f64;
    let mut bank = Array2::zeros((cfg.num_filters, bins));
    for m in 0..cfg.num_filters {
        let left = lo + m as f64 * step;
        let center = left + step;
        let right = center + step;
        for k in 0..bins {
            let mel = hz_to_mel(k as f64 * cfg.sample_rate as f64 / cfg.fft_size as f64);
            let w = if mel > left && mel <= center {
                (mel - left) / (center - left)
            } else if mel > center && mel < right {
                (right - mel) / (right - center)
            } else {
                0.0
            };
            bank[[m, k]] = w;
        }
    }
    bank
}

/// Orthonormal DCT-II matrix; row `k` maps an `n`-vector to coefficient `k`.
pub fn dct_matrix(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(k, m)| {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        scale * (PI * k as f64 * (2 * m + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// Regression deltas over `±window` frames with edge replication:
/// `d_t = Σ_n n (c_{t+n} - c_{t-n}) / (2 Σ_n n²)`.
pub fn delta(seq: ArrayView2<f64>, window: usize) -> Array2<f64> {
    let (t_len, dim) = seq.dim();
    let denom = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Array2::zeros((t_len, dim));
    if t_len == 0 {
        return out;
    }
    let last = t_len as isize - 1;
    let clamp = |i: isize| i.clamp(0, last) as usize;
    for t in 0..t_len {
        let mut row = out.row_mut(t);
        for n in 1..=window {
            let fwd = seq.row(clamp(t as isize + n as isize));
            let back = seq.row(clamp(t as isize - n as isize));
            let w = n as f64 / denom;
            for d in 0..dim {
                row[d] += w * (fwd[d] - back[d]);
            }
        }
    }
    out
}

/// Append Δ and ΔΔ columns to a static cepstral sequence.
pub fn append_deltas(cepstra: ArrayView2<f64>, window: usize) -> Array2<f64> {
    let d1 = delta(cepstra, window);
    let d2 = delta(d1.view(), window);
    let out = ndarray::concatenate(Axis(1), &[cepstra.view(), d1.view(), d2.view()]).expect("equal row counts");
    // column concatenation may come back column-major; frames are row-major
    out.as_standard_layout().into_owned()
}

/// Reusable MFCC front end with precomputed window, filterbank, DCT and FFT
/// plan.
pub struct MfccExtractor {
    cfg: FeatureConfig,
    window: Array1<f64>,
    filterbank: Array2<f64>,
    dct: Array2<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MfccExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MfccExtractor").field("cfg", &self.cfg).finish()
    }
}

impl MfccExtractor {
    pub fn new(cfg: FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.frame_length;
        let window = Array1::from_shape_fn(n, |i| {
            0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
        });
        let filterbank = mel_filterbank(&cfg);
        let dct = dct_matrix(cfg.num_filters)
            .slice(s![..cfg.num_ceps, ..])
            .to_owned();
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
        Ok(MfccExtractor {
            cfg,
            window,
            filterbank,
            dct,
            fft,
        })
    }

    pub fn config(&self) -> &FeatureConfig {
        &self.cfg
    }

    /// Power spectrum of one frame after pre-emphasis and windowing.
    pub fn power_spectrum(&self, frame: &[f64]) -> Array1<f64> {
        let cfg = &self.cfg;
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
        for i in 0..frame.len() {
            let prev = if i == 0 { frame[0] } else { frame[i - 1] };
            buf[i].re = (frame[i] - cfg.pre_emphasis * prev) * self.window[i];
        }
        self.fft.process(&mut buf);
        Array1::from_iter(buf[..cfg.fft_size / 2 + 1].iter().map(|c| c.norm_sqr()))
    }

    /// Floored log filterbank energies of one frame.
    pub fn log_mel(&self, frame: &[f64]) -> Array1<f64> {
        let power = self.power_spectrum(frame);
        self.filterbank
            .dot(&power)
            .mapv(|e| e.max(self.cfg.log_floor).ln())
    }

    /// T×13 static cepstra.
    pub fn static_cepstra(&self, samples: &[f64]) -> Result<Array2<f64>> {
        let cfg = &self.cfg;
        let t_len = frame_count(samples.len(), cfg.frame_length, cfg.frame_shift);
        if t_len == 0 {
            return Err(Error::invalid(format!(
                "waveform of {} samples is shorter than one {}-sample frame",
                samples.len(),
                cfg.frame_length
            )));
        }
        let mut out = Array2::zeros((t_len, cfg.num_ceps));
        for t in 0..t_len {
            let start = t * cfg.frame_shift;
            let lm = self.log_mel(&samples[start..start + cfg.frame_length]);
            out.row_mut(t).assign(&self.dct.dot(&lm));
        }
        Ok(out)
    }

    pub fn extract(&self, w: &Waveform, source_id: &str) -> Result<FeatureSequence> {
        w.validate()?;
        if w.sample_rate != self.cfg.sample_rate {
            return Err(Error::invalid(format!(
                "waveform rate {} Hz does not match feature config {} Hz",
                w.sample_rate, self.cfg.sample_rate
            )));
        }
        let ceps = self.static_cepstra(&w.samples)?;
        let frames = append_deltas(ceps.view(), self.cfg.delta_window);
        let rate = self.cfg.sample_rate as f64;
        FeatureSequence::new(
            frames,
            self.cfg.frame_shift as f64 / rate,
            self.cfg.frame_length as f64 / rate,
            source_id,
        )
    }
}

pub fn extract_mfcc(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureSequence> {
    MfccExtractor::new(cfg.clone())?.extract(w, "")
}
