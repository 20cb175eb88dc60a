use ndarray::ArrayView2;
use rand::Rng;

use crate::corpus::Batch;
use crate::error::{Error, Result};
use crate::network::{
    losses, mse_grad, mse_loss, nll_grad_logits, nll_loss, GradientSet, JointNetwork, Real, Stack,
    StackGrads,
};

/// Training losses of one minibatch, measured in the train-mode forward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub mse: f64,
    pub nll: f64,
}

fn check_batch(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::invalid(format!("minibatch of {n} rows; at least 2 required")));
    }
    Ok(())
}

fn finite_or_fail<F: Real>(g: &StackGrads<F>, which: &str) -> Result<()> {
    if g.is_finite() {
        Ok(())
    } else {
        Err(Error::numeric(which, "non-finite gradient"))
    }
}

/// One train-mode forward and both backward sweeps.
pub fn joint_gradients<F: Real, R: Rng + ?Sized>(
    net: &mut JointNetwork<F>,
    batch: &Batch<F>,
    rng: &mut R,
) -> Result<(GradientSet<F>, StepStats)> {
    check_batch(batch.len())?;
    let (x_enh, y_pred, trace) = net.forward_train(batch.noisy.view(), rng)?;
    let l = losses(x_enh.view(), batch.clean.view(), y_pred.view(), &batch.labels)?;
    let grads = net.backward(&trace, batch.clean.view(), &batch.labels)?;
    finite_or_fail(&grads.se_from_mse, "se (mse gradient)")?;
    finite_or_fail(&grads.se_from_nll, "se (nll gradient)")?;
    finite_or_fail(&grads.sr, "sr (nll gradient)")?;
    Ok((
        grads,
        StepStats {
            mse: l.mse,
            nll: l.nll,
        },
    ))
}

/// Weighted joint update:
/// `θ_SE ← θ_SE − lr (g_SE + λ g_SR)` and `θ_SR ← θ_SR − lr g_SR`.
pub fn apply_joint_update<F: Real>(net: &mut JointNetwork<F>, grads: &GradientSet<F>, lr: f64, lambda: f64) {
    let lr = F::from_f64_lossy(lr);
    let lambda = F::from_f64_lossy(lambda);
    net.se
        .sgd_update(lr, &grads.se_from_mse, Some((lambda, &grads.se_from_nll)));
    net.sr.sgd_update(lr, &grads.sr, None);
}

/// One joint SGD step on `batch`.
pub fn sgd_step<F: Real, R: Rng + ?Sized>(
    net: &mut JointNetwork<F>,
    batch: &Batch<F>,
    lr: f64,
    lambda: f64,
    rng: &mut R,
) -> Result<StepStats> {
    let (grads, stats) = joint_gradients(net, batch, rng)?;
    apply_joint_update(net, &grads, lr, lambda);
    Ok(stats)
}

/// Standalone enhancement step on the MSE loss.
pub fn se_step<F: Real, R: Rng + ?Sized>(
    se: &mut Stack<F>,
    noisy: ArrayView2<F>,
    clean: ArrayView2<F>,
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    check_batch(noisy.nrows())?;
    let (x_enh, trace) = se.forward_train(noisy, rng)?;
    let mse = mse_loss(x_enh.view(), clean)?;
    let (g, _) = se.backward(&trace, mse_grad(x_enh.view(), clean).view(), false)?;
    finite_or_fail(&g, "se (mse gradient)")?;
    se.sgd_update(F::from_f64_lossy(lr), &g, None);
    Ok(mse)
}

/// Standalone classification step on the NLL loss.
pub fn sr_step<F: Real, R: Rng + ?Sized>(
    stack: &mut Stack<F>,
    input: ArrayView2<F>,
    labels: &[usize],
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    check_batch(input.nrows())?;
    let (y_pred, trace) = stack.forward_train(input, rng)?;
    let (nll, _) = nll_loss(y_pred.view(), labels)?;
    let d = nll_grad_logits(y_pred.view(), labels)?;
    let (g, _) = stack.backward(&trace, d.view(), false)?;
    finite_or_fail(&g, &format!("{} (nll gradient)", stack.name))?;
    stack.sgd_update(F::from_f64_lossy(lr), &g, None);
    Ok(nll)
}

/// The single big network trains exactly like a standalone recognizer.
pub fn single_step<F: Real, R: Rng + ?Sized>(
    stack: &mut Stack<F>,
    noisy: ArrayView2<F>,
    labels: &[usize],
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    sr_step(stack, noisy, labels, lr, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Head, LayerOptions, NetConfig};
    use crate::rng;
    use ndarray::Array2;

    #[test]
    fn scalar_update_arithmetic() {
        // one SE parameter at 0 with g_SE = 1 and g_SR = 2, λ = 0.1, lr = 0.5
        let opts = LayerOptions {
            batchnorm: false,
            gamma_init: 0.1,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
            dropout: 0.0,
        };
        let mut r = rng::stream(0, &[]);
        let se: Stack<f64> = Stack::new("se", 1, &[], 1, Head::Linear, opts, &mut r);
        let sr: Stack<f64> = Stack::new("sr", 1, &[], 2, Head::Softmax, opts, &mut r);
        let mut net = JointNetwork::from_parts(se, sr).unwrap();
        net.se.output.weight.fill(0.0);
        let grad = |v: f64, net: &JointNetwork<f64>| {
            let mut g = StackGrads {
                hidden: vec![],
                out_weight: Array2::from_elem((1, 1), v),
                out_bias: ndarray::Array1::zeros(1),
            };
            g.out_bias.fill(0.0);
            let _ = net;
            g
        };
        let sr_g = StackGrads {
            hidden: vec![],
            out_weight: Array2::zeros((2, 1)),
            out_bias: ndarray::Array1::zeros(2),
        };
        let grads = GradientSet {
            se_from_mse: grad(1.0, &net),
            se_from_nll: grad(2.0, &net),
            sr: sr_g,
        };
        apply_joint_update(&mut net, &grads, 0.5, 0.1);
        assert!((net.se.output.weight[[0, 0]] - (-0.6)).abs() < 1e-15);
    }

    #[test]
    fn tiny_batches_are_rejected() {
        let cfg = NetConfig {
            input_dim: 4,
            enhanced_dim: 3,
            num_classes: 2,
            se_hidden: vec![3],
            sr_hidden: vec![3],
            ..NetConfig::default()
        };
        let mut r = rng::stream(1, &[]);
        let mut net = JointNetwork::<f64>::new(&cfg, &mut r).unwrap();
        let batch = Batch {
            noisy: Array2::zeros((1, 4)),
            clean: Array2::zeros((1, 3)),
            labels: vec![0],
        };
        assert!(matches!(
            sgd_step(&mut net, &batch, 0.1, 0.1, &mut r),
            Err(Error::InvalidInput(_))
        ));
    }
}
