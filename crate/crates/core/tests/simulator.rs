//! Calibration of the contamination simulator and separability of the
//! synthetic classes.

use jointbn::config::ExperimentConfig;
use jointbn::features::{normalize_features, FeatureConfig};
use jointbn::simulate::{
    contaminate_components, simulate_utterance, synth_clean_utterance, synth_rir,
    synth_rir_with_drr, ContaminationConfig, NoiseKind, Split, SynthConfig,
};
use ndarray::{Array1, Array2, Axis};

mod common;
use common::schroeder_slope;

#[test]
fn reverberation_decays_sixty_db_per_t60() {
    for (i, &t60) in [0.3, 0.5, 0.7, 1.0].iter().enumerate() {
        for seed in 0..3 {
            let rir = synth_rir(t60, 1.5 * t60, 16_000, 10 * i as u64 + seed).unwrap();
            assert_eq!(rir.taps[0], 1.0);
            let decay_at_t60 = schroeder_slope(&rir.taps, 16_000.0, 0.01, 0.6 * t60) * t60;
            assert!(
                (decay_at_t60 + 60.0).abs() < 6.0,
                "t60 {t60}: {decay_at_t60:.2} dB at T60"
            );
        }
    }
}

#[test]
fn vanishing_t60_leaves_only_the_direct_path() {
    let rir = synth_rir(1e-4, 0.05, 16_000, 4).unwrap();
    let total = rir.energy();
    let late: f64 = rir.taps[80..].iter().map(|t| t * t).sum();
    assert!(late < 1e-6 * total);
}

#[test]
fn direct_to_reverberant_ratio_is_exact() {
    for drr in [-6.0, 0.0, 3.0] {
        let rir = synth_rir_with_drr(0.7, 1.05, 16_000, drr, 9).unwrap();
        let tail: f64 = rir.taps[1..].iter().map(|t| t * t).sum();
        assert!((10.0 * (1.0 / tail).log10() - drr).abs() < 1e-9);
    }
}

#[test]
fn measured_snr_matches_request() {
    let synth = SynthConfig { utterance_seconds: 1.0, ..SynthConfig::default() };
    for (k, kind) in [NoiseKind::White, NoiseKind::BabbleLike].into_iter().enumerate() {
        for (j, snr) in [0.0, 10.0, 20.0].into_iter().enumerate() {
            let (clean, _) = synth_clean_utterance(&synth, (k * 3 + j) as u64).unwrap();
            let cfg = ContaminationConfig { snr_db: snr, noise_kind: kind, ..Default::default() };
            let rir = synth_rir(cfg.t60, cfg.rir_duration(), 16_000, j as u64).unwrap();
            let c = contaminate_components(&clean, &rir, &cfg, 77).unwrap();
            let p = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
            let measured = 10.0 * (p(&c.reverberant) / p(&c.noise)).log10();
            assert!((measured - snr).abs() < 0.1, "{kind:?} at {snr} dB measured {measured}");
            for i in 0..c.mixture.len() {
                assert_eq!(c.mixture[i], c.reverberant[i] + c.noise[i]);
            }
            assert_eq!(c.mixture.len(), clean.len());
        }
    }
}

#[test]
fn generation_is_bit_reproducible() {
    let cfg = ExperimentConfig::default();
    let a = simulate_utterance(&cfg.simulate, &cfg.contamination, Split::Dev, 3).unwrap();
    let b = simulate_utterance(&cfg.simulate, &cfg.contamination, Split::Dev, 3).unwrap();
    assert_eq!(a, b);
    let c = simulate_utterance(&cfg.simulate, &cfg.contamination, Split::Dev, 4).unwrap();
    assert_ne!(a.noisy.samples, c.noisy.samples);
}

/// Softmax regression by full-batch gradient descent: the separability
/// oracle for clean features.
fn linear_softmax_accuracy(x: &Array2<f64>, y: &[usize], k: usize, xt: &Array2<f64>, yt: &[usize]) -> f64 {
    let d = x.ncols();
    let mut w = Array2::<f64>::zeros((d, k));
    let mut b = Array1::<f64>::zeros(k);
    let n = x.nrows() as f64;
    for _ in 0..300 {
        let mut z = x.dot(&w) + &b;
        for mut row in z.rows_mut() {
            let m = row.fold(f64::MIN, |a, &v| a.max(v));
            row.mapv_inplace(|v| (v - m).exp());
            let s = row.sum();
            row /= s;
        }
        for (i, &l) in y.iter().enumerate() {
            z[[i, l]] -= 1.0;
        }
        w -= &(x.t().dot(&z) * (0.5 / n));
        b -= &(z.sum_axis(Axis(0)) * (0.5 / n));
    }
    let scores = xt.dot(&w) + &b;
    let correct = scores
        .rows()
        .into_iter()
        .zip(yt)
        .filter(|(r, &l)| (0..k).max_by(|&a, &c| r[a].total_cmp(&r[c])).unwrap() == l)
        .count();
    correct as f64 / yt.len() as f64
}

#[test]
fn clean_classes_are_linearly_separable() {
    let synth = SynthConfig { num_classes: 10, utterance_seconds: 1.0, ..SynthConfig::default() };
    let feat = FeatureConfig::default();
    let frames = |range: std::ops::Range<u64>| {
        let utts: Vec<_> = range
            .map(|s| {
                let (w, l) = synth_clean_utterance(&synth, 1000 + s).unwrap();
                let f = jointbn::features::extract_mfcc(&w, &feat).unwrap();
                (f, l)
            })
            .collect();
        let labels: Vec<usize> = utts.iter().flat_map(|(_, l)| l.clone()).collect();
        (utts.into_iter().map(|(f, _)| f).collect::<Vec<_>>(), labels)
    };
    let (train, ytrain) = frames(0..40);
    let (test, ytest) = frames(40..60);
    let (train_n, stats) = normalize_features(&train).unwrap();
    let stack = |seqs: &[jointbn::features::FeatureSequence]| {
        let views: Vec<_> = seqs.iter().map(|s| s.frames.view()).collect();
        ndarray::concatenate(Axis(0), &views).unwrap()
    };
    let test_n: Vec<_> = test.iter().map(|s| stats.apply(s)).collect();
    let acc = linear_softmax_accuracy(&stack(&train_n), &ytrain, 10, &stack(&test_n), &ytest);
    assert!(acc > 0.7, "linear accuracy {acc}");
}
