//! The MFCC front end against a straight-line reference that shares no code
//! with the library: direct DFT, filter weights and DCT written out longhand.

use std::f64::consts::PI;

use jointbn::features::{extract_mfcc, FeatureConfig, MfccExtractor, Waveform};
use jointbn::rng::stream;
use rand::Rng;

fn mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Returns per-frame log filterbank energies.
fn reference_log_mel(x: &[f64]) -> Vec<Vec<f64>> {
    let (sr, flen, shift, nfft, nfilt) = (16000.0, 400usize, 160usize, 512usize, 23usize);
    let frames = 1 + (x.len() - flen) / shift;
    let (lo, hi) = (mel(64.0), mel(8000.0));
    let mut out = Vec::new();
    for t in 0..frames {
        let seg = &x[t * shift..t * shift + flen];
        let mut y = vec![0.0; flen];
        for n in 0..flen {
            let prev = if n == 0 { seg[0] } else { seg[n - 1] };
            let hamming = 0.54 - 0.46 * (2.0 * PI * n as f64 / (flen as f64 - 1.0)).cos();
            y[n] = (seg[n] - 0.97 * prev) * hamming;
        }
        let mut power = vec![0.0; nfft / 2 + 1];
        for (k, p) in power.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for (n, &v) in y.iter().enumerate() {
                let a = -2.0 * PI * (k * n) as f64 / nfft as f64;
                re += v * a.cos();
                im += v * a.sin();
            }
            *p = re * re + im * im;
        }
        let mut energies = vec![0.0; nfilt];
        for (m, e) in energies.iter_mut().enumerate() {
            let left = lo + (hi - lo) * m as f64 / (nfilt + 1) as f64;
            let center = lo + (hi - lo) * (m + 1) as f64 / (nfilt + 1) as f64;
            let right = lo + (hi - lo) * (m + 2) as f64 / (nfilt + 1) as f64;
            for (k, &p) in power.iter().enumerate() {
                let f = mel(k as f64 * sr / nfft as f64);
                let w = if f > left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f < right {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
                *e += w * p;
            }
        }
        out.push(energies.iter().map(|&e| e.max(1e-10).ln()).collect());
    }
    out
}

fn reference_mfcc(x: &[f64]) -> Vec<Vec<f64>> {
    let nfilt = 23.0f64;
    let stat: Vec<Vec<f64>> = reference_log_mel(x)
        .iter()
        .map(|lm| {
            (0..13)
                .map(|k| {
                    let s = if k == 0 { (1.0 / nfilt).sqrt() } else { (2.0 / nfilt).sqrt() };
                    s * lm
                        .iter()
                        .enumerate()
                        .map(|(m, &v)| v * (PI * k as f64 * (m as f64 + 0.5) / nfilt).cos())
                        .sum::<f64>()
                })
                .collect()
        })
        .collect();
    let deltas = |c: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let last = c.len() as isize - 1;
        let at = |i: isize| &c[i.clamp(0, last) as usize];
        (0..c.len() as isize)
            .map(|t| {
                (0..13)
                    .map(|d| {
                        1.0 / 10.0 * (at(t + 1)[d] - at(t - 1)[d])
                            + 2.0 / 10.0 * (at(t + 2)[d] - at(t - 2)[d])
                    })
                    .collect()
            })
            .collect()
    };
    let d1 = deltas(&stat);
    let d2 = deltas(&d1);
    (0..stat.len())
        .map(|t| [stat[t].clone(), d1[t].clone(), d2[t].clone()].concat())
        .collect()
}

#[test]
fn pipeline_matches_straight_line_reference() {
    let mut rng = stream(11, &[]);
    let samples: Vec<f64> = (0..2000).map(|_| rng.random_range(-0.5..0.5)).collect();
    let w = Waveform::new(samples.clone(), 16000).unwrap();
    let got = extract_mfcc(&w, &FeatureConfig::default()).unwrap();
    let want = reference_mfcc(&samples);
    assert_eq!(got.num_frames(), want.len());
    assert_eq!(got.num_frames(), 1 + (2000 - 400) / 160);
    for (t, row) in want.iter().enumerate() {
        for (d, &v) in row.iter().enumerate() {
            let g = got.frames[[t, d]];
            assert!(
                (g - v).abs() <= 1e-8 * v.abs().max(1e-2),
                "frame {t} dim {d}: {g} vs {v}"
            );
        }
    }
}

#[test]
fn tone_at_band_centre_peaks_in_that_band() {
    let ex = MfccExtractor::new(FeatureConfig::default()).unwrap();
    let (lo, hi) = (mel(64.0), mel(8000.0));
    for band in [3usize, 9, 15, 20] {
        let f = inv_mel(lo + (hi - lo) * (band + 1) as f64 / 24.0);
        let x: Vec<f64> = (0..400).map(|n| (2.0 * PI * f * n as f64 / 16000.0).sin()).collect();
        let reference = &reference_log_mel(&x)[0];
        let argmax = |v: &[f64]| (0..v.len()).max_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap();
        assert_eq!(argmax(reference), band, "reference, band {band}");
        let lm = ex.log_mel(&x);
        assert_eq!(argmax(lm.as_slice().unwrap()), band, "extractor, band {band}");
        for (a, b) in lm.iter().zip(reference) {
            assert!((a - b).abs() < 1e-8 * b.abs().max(1.0));
        }
    }
}

#[test]
fn short_or_mismatched_waveforms_are_rejected() {
    let cfg = FeatureConfig::default();
    assert!(extract_mfcc(&Waveform::new(vec![0.1; 399], 16000).unwrap(), &cfg).is_err());
    assert!(extract_mfcc(&Waveform::new(vec![0.1; 800], 8000).unwrap(), &cfg).is_err());
    assert!(Waveform::new(vec![0.1, f64::NAN], 16000).is_err());
}
