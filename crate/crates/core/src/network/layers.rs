use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use super::init::glorot_init;
use super::Real;
use crate::error::{Error, Result};

/// Affine layer `y = x Wᵀ + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<F> {
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

impl<F: Real> Linear<F> {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        Linear {
            weight: glorot_init(fan_in, fan_out, rng),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn forward(&self, x: ArrayView2<F>) -> Array2<F> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    /// Returns `(dW, db, dx)`; `dx` only when requested.
    pub fn backward(
        &self,
        x: ArrayView2<F>,
        dy: ArrayView2<F>,
        need_dx: bool,
    ) -> (Array2<F>, Array1<F>, Option<Array2<F>>) {
        let dw = dy.t().dot(&x);
        let db = dy.sum_axis(Axis(0));
        let dx = need_dx.then(|| dy.dot(&self.weight));
        (dw, db, dx)
    }
}

/// Batch-normalization parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    pub momentum: F,
    pub eps: F,
}

/// Batch quantities kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnCache<F> {
    pub x_hat: Array2<F>,
    pub inv_std: Array1<F>,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(dim: usize, gamma_init: f64, momentum: f64, eps: f64) -> Self {
        BatchNorm {
            gamma: Array1::from_elem(dim, F::from_f64_lossy(gamma_init)),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: F::from_f64_lossy(momentum),
            eps: F::from_f64_lossy(eps),
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// Normalize with the batch moments (biased variance) and fold them into
    /// the running statistics (unbiased variance).
    pub fn forward_train(&mut self, x: ArrayView2<F>) -> Result<(Array2<F>, BnCache<F>)> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::invalid(format!(
                "batch normalization in train mode needs at least 2 rows, got {n}"
            )));
        }
        let nf = F::from_usize(n).unwrap();
        let mean = x.sum_axis(Axis(0)) / nf;
        let centered = &x - &mean;
        let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / nf;
        let inv_std = var.mapv(|v| F::one() / (v + self.eps).sqrt());
        let x_hat = centered * &inv_std;
        let y = &x_hat * &self.gamma + &self.beta;

        let m = self.momentum;
        let keep = F::one() - m;
        let unbias = nf / (nf - F::one());
        Zip::from(&mut self.running_mean)
            .and(&mean)
            .for_each(|r, &b| *r = keep * *r + m * b);
        Zip::from(&mut self.running_var)
            .and(&var)
            .for_each(|r, &b| *r = keep * *r + m * b * unbias);
        Ok((y, BnCache { x_hat, inv_std }))
    }

    pub fn forward_inference(&self, x: ArrayView2<F>) -> Array2<F> {
        let scale = Zip::from(&self.gamma)
            .and(&self.running_var)
            .map_collect(|&g, &v| g / (v + self.eps).sqrt());
        let shift = &self.beta - &(&self.running_mean * &scale);
        &x * &scale + &shift
    }

    /// Exact gradients of the train-mode transform, including the
    /// dependence of the batch moments on `x`. Returns `(dx, dγ, dβ)`.
    pub fn backward(
        &self,
        dy: ArrayView2<F>,
        cache: &BnCache<F>,
    ) -> Result<(Array2<F>, Array1<F>, Array1<F>)> {
        if dy.dim() != cache.x_hat.dim() || cache.inv_std.len() != self.dim() {
            return Err(Error::invalid(format!(
                "batch-norm trace shape {:?} does not match gradient {:?}",
                cache.x_hat.dim(),
                dy.dim()
            )));
        }
        let nf = F::from_usize(dy.nrows()).unwrap();
        let dbeta = dy.sum_axis(Axis(0));
        let dgamma = (&dy * &cache.x_hat).sum_axis(Axis(0));
        let coef = Zip::from(&self.gamma)
            .and(&cache.inv_std)
            .map_collect(|&g, &s| g * s / nf);
        let mut dx = &dy * nf - &dbeta;
        Zip::from(&mut dx)
            .and(&cache.x_hat)
            .and_broadcast(&dgamma)
            .for_each(|d, &xh, &dg| *d = *d - xh * dg);
        dx *= &coef;
        Ok((dx, dgamma, dbeta))
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<F: Real>(logits: ArrayView2<F>) -> Array2<F> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(F::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = rng::stream(seed, &[]);
        Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(&mut r))
    }

    fn column_moments(y: &Array2<f64>) -> (Array1<f64>, Array1<f64>) {
        let n = y.nrows() as f64;
        let mean = y.sum_axis(Axis(0)) / n;
        let var = (y - &mean).mapv(|v| v * v).sum_axis(Axis(0)) / n;
        (mean, var.mapv(f64::sqrt))
    }

    #[test]
    fn standardized_batch_passes_through() {
        let x = randn(64, 5, 1);
        let (m, s) = column_moments(&x);
        let x = (&x - &m) / &s;
        let mut bn = BatchNorm::<f64>::new(5, 1.0, 0.1, 1e-12);
        let (y, _) = bn.forward_train(x.view()).unwrap();
        for (a, b) in y.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn output_moments_follow_gamma_and_beta() {
        let x = randn(128, 6, 2) * 3.0 + 1.5;
        let mut bn = BatchNorm::<f64>::new(6, 0.1, 0.1, 1e-5);
        bn.beta.fill(0.5);
        let (y, _) = bn.forward_train(x.view()).unwrap();
        let (m, s) = column_moments(&y);
        for d in 0..6 {
            assert!((m[d] - 0.5).abs() < 1e-6);
            assert!((s[d] - 0.1).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_batch_maps_to_beta() {
        let x = Array2::from_elem((8, 3), 0.75);
        let mut bn = BatchNorm::<f64>::new(3, 2.0, 0.1, 1e-5);
        bn.beta.assign(&Array1::from(vec![0.1, -0.2, 0.3]));
        let (y, _) = bn.forward_train(x.view()).unwrap();
        for row in y.rows() {
            assert_eq!(row, bn.beta);
        }
    }

    #[test]
    fn single_row_batch_is_rejected_in_train_mode() {
        let mut bn = BatchNorm::<f64>::new(3, 0.1, 0.1, 1e-5);
        assert!(matches!(
            bn.forward_train(Array2::zeros((1, 3)).view()),
            Err(Error::InvalidInput(_))
        ));
        // inference has no such constraint
        assert_eq!(bn.forward_inference(Array2::zeros((1, 3)).view()).dim(), (1, 3));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let x = randn(16, 4, 3);
        let mut bn = BatchNorm::<f64>::new(4, 0.1, 0.1, 1e-5);
        let (_, cache) = bn.forward_train(x.view()).unwrap();
        let (dx, dg, db) = bn.backward(Array2::zeros((16, 4)).view(), &cache).unwrap();
        assert!(dx.iter().chain(dg.iter()).chain(db.iter()).all(|&v| v == 0.0));
    }

    #[test]
    fn input_gradient_sums_to_zero_per_unit() {
        let x = randn(32, 4, 4);
        let dy = randn(32, 4, 5);
        let mut bn = BatchNorm::<f64>::new(4, 0.7, 0.1, 1e-5);
        let (_, cache) = bn.forward_train(x.view()).unwrap();
        let (dx, _, _) = bn.backward(dy.view(), &cache).unwrap();
        for s in dx.sum_axis(Axis(0)).iter() {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_trace_is_rejected() {
        let mut bn = BatchNorm::<f64>::new(4, 0.1, 0.1, 1e-5);
        let (_, cache) = bn.forward_train(randn(8, 4, 6).view()).unwrap();
        assert!(bn.backward(Array2::zeros((7, 4)).view(), &cache).is_err());
    }

    #[test]
    fn running_statistics_track_the_population() {
        let mut bn = BatchNorm::<f64>::new(3, 0.1, 0.1, 1e-5);
        let mut errors = Vec::new();
        for i in 0..500 {
            let x = randn(64, 3, 100 + i) * 2.0 + 3.0;
            bn.forward_train(x.view()).unwrap();
            errors.push(bn.running_mean.iter().map(|m| (m - 3.0).abs()).fold(0.0, f64::max));
        }
        // EMA over ~19 batches of 64: the running mean wanders by about 0.06.
        assert!(errors[499] < 0.25);
        assert!(bn.running_var.iter().all(|v| (v - 4.0).abs() < 0.5));
        let early: f64 = errors[..10].iter().sum::<f64>() / 10.0;
        let late: f64 = errors[490..].iter().sum::<f64>() / 10.0;
        assert!(late < early);
    }

    #[test]
    fn inference_uses_running_statistics() {
        let mut bn = BatchNorm::<f64>::new(2, 1.0, 0.1, 0.0);
        bn.running_mean.assign(&Array1::from(vec![1.0, -1.0]));
        bn.running_var.assign(&Array1::from(vec![4.0, 0.25]));
        let y = bn.forward_inference(Array2::from_shape_vec((1, 2), vec![3.0, 0.0]).unwrap().view());
        assert_eq!(y.row(0).to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let z = randn(10, 7, 7) * 30.0;
        let p = softmax_rows(z.view());
        for row in p.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }
}
