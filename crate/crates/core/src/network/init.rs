use ndarray::Array2;
use rand::Rng;

use super::Real;

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `fan_out × fan_in` matrix with entries uniform on `[-L, L]`.
pub fn glorot_init<F: Real, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<F> {
    assert!(fan_in >= 1 && fan_out >= 1, "fans must be positive");
    let limit = glorot_limit(fan_in, fan_out);
    Array2::from_shape_simple_fn((fan_out, fan_in), || {
        F::from_f64_lossy(rng.random_range(-limit..=limit))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn limit_formula() {
        assert_eq!(glorot_limit(3, 3), 1.0);
        let w: Array2<f64> = glorot_init(3, 3, &mut rng::stream(1, &[]));
        assert!(w.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn variance_matches_uniform() {
        let w: Array2<f64> = glorot_init(500, 2000, &mut rng::stream(2, &[]));
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let l = glorot_limit(500, 2000);
        assert!((var / (l * l / 3.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn same_seed_same_weights() {
        let a: Array2<f32> = glorot_init(7, 5, &mut rng::stream(3, &[]));
        let b: Array2<f32> = glorot_init(7, 5, &mut rng::stream(3, &[]));
        assert_eq!(a, b);
        assert_eq!(a.dim(), (5, 7));
    }
}
