//! Oracles shared by several test targets.
#![allow(dead_code)]

use jointbn::network::Stack;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const H: f64 = 1e-5;

pub fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

pub fn labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

pub fn central(mut f: impl FnMut(f64) -> f64, x0: f64) -> f64 {
    (f(x0 + H) - f(x0 - H)) / (2.0 * H)
}

/// Largest relative error between two gradients. Tiny components are
/// compared on the scale of the largest analytic entry.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-3 * scale).max(1e-10))
        .fold(0.0, f64::max)
}

/// Numeric gradient of `loss` over every trainable tensor of `stack`.
pub fn stack_numeric(stack: &Stack<f64>, loss: impl Fn(&Stack<f64>) -> f64) -> Vec<f64> {
    let sizes: Vec<usize> = stack.tensors().iter().map(|t| t.len()).collect();
    let mut out = Vec::new();
    for (t, &len) in sizes.iter().enumerate() {
        for i in 0..len {
            let mut s = stack.clone();
            let x0 = s.tensors()[t][i];
            out.push(central(
                |v| {
                    s.tensors_mut()[t][i] = v;
                    loss(&s)
                },
                x0,
            ));
        }
    }
    out
}

pub fn flat(t: Vec<&[f64]>) -> Vec<f64> {
    t.into_iter().flatten().copied().collect()
}

/// Least-squares slope (dB per second) of the backward-integrated energy
/// curve between `from` and `to` seconds.
pub fn schroeder_slope(taps: &[f64], rate: f64, from: f64, to: f64) -> f64 {
    let mut edc = vec![0.0; taps.len() + 1];
    for i in (0..taps.len()).rev() {
        edc[i] = edc[i + 1] + taps[i] * taps[i];
    }
    let pts: Vec<(f64, f64)> = (0..taps.len())
        .map(|i| (i as f64 / rate, 10.0 * (edc[i] / edc[0]).log10()))
        .filter(|&(t, _)| t >= from && t <= to)
        .collect();
    let n = pts.len() as f64;
    let (mt, md) = pts.iter().fold((0.0, 0.0), |(a, b), &(t, d)| (a + t / n, b + d / n));
    let cov: f64 = pts.iter().map(|&(t, d)| (t - mt) * (d - md)).sum();
    let var: f64 = pts.iter().map(|&(t, _)| (t - mt) * (t - mt)).sum();
    cov / var
}
