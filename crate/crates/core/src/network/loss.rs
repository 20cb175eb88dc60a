use ndarray::{Array2, ArrayView2, Zip};

use super::Real;
use crate::error::{Error, Result};

/// Probabilities are clamped here before the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValues {
    pub mse: f64,
    pub nll: f64,
    /// Rows whose label probability was clamped at [`PROB_FLOOR`].
    pub clamped: usize,
}

/// `(1/N) Σ_n ‖x_enh − x_clean‖²`: squared error summed over coordinates,
/// averaged over the batch.
pub fn mse_loss<F: Real>(x_enh: ArrayView2<F>, x_clean: ArrayView2<F>) -> Result<f64> {
    if x_enh.dim() != x_clean.dim() {
        return Err(Error::invalid(format!(
            "shape mismatch: enhanced {:?}, clean {:?}",
            x_enh.dim(),
            x_clean.dim()
        )));
    }
    if x_enh.nrows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let mut acc = 0.0f64;
    Zip::from(x_enh).and(x_clean).for_each(|&a, &b| {
        let d = a.to_f64().unwrap() - b.to_f64().unwrap();
        acc += d * d;
    });
    Ok(acc / x_enh.nrows() as f64)
}

/// `∂MSE/∂x_enh = 2 (x_enh − x_clean) / N`.
pub fn mse_grad<F: Real>(x_enh: ArrayView2<F>, x_clean: ArrayView2<F>) -> Array2<F> {
    let scale = F::from_f64_lossy(2.0 / x_enh.nrows() as f64);
    (&x_enh - &x_clean) * scale
}

fn check_labels(rows: usize, classes: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::invalid(format!(
            "{} labels for {rows} predictions",
            labels.len()
        )));
    }
    if rows == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// `−(1/N) Σ_n log y_pred[n, label_n]`, with probabilities clamped at
/// [`PROB_FLOOR`]. Returns the loss and the number of clamped rows.
pub fn nll_loss<F: Real>(y_pred: ArrayView2<F>, labels: &[usize]) -> Result<(f64, usize)> {
    check_labels(y_pred.nrows(), y_pred.ncols(), labels)?;
    let mut clamped = 0;
    let mut acc = 0.0;
    for (row, &l) in y_pred.rows().into_iter().zip(labels) {
        let p = row[l].to_f64().unwrap();
        if p < PROB_FLOOR {
            clamped += 1;
        }
        acc -= p.max(PROB_FLOOR).ln();
    }
    Ok((acc / labels.len() as f64, clamped))
}

/// Gradient of the mean NLL with respect to softmax logits:
/// `(y_pred − onehot) / N`.
pub fn nll_grad_logits<F: Real>(y_pred: ArrayView2<F>, labels: &[usize]) -> Result<Array2<F>> {
    check_labels(y_pred.nrows(), y_pred.ncols(), labels)?;
    let n = F::from_usize(labels.len()).unwrap();
    let mut g = y_pred.to_owned();
    for (mut row, &l) in g.rows_mut().into_iter().zip(labels) {
        row[l] = row[l] - F::one();
    }
    g.mapv_inplace(|v| v / n);
    Ok(g)
}

pub fn losses<F: Real>(
    x_enh: ArrayView2<F>,
    x_clean: ArrayView2<F>,
    y_pred: ArrayView2<F>,
    labels: &[usize],
) -> Result<LossValues> {
    let mse = mse_loss(x_enh, x_clean)?;
    let (nll, clamped) = nll_loss(y_pred, labels)?;
    Ok(LossValues { mse, nll, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_targets_have_zero_mse() {
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        assert_eq!(mse_loss(x.view(), x.view()).unwrap(), 0.0);
    }

    #[test]
    fn uniform_prediction_gives_log_k() {
        let k = 7;
        let p = Array2::from_elem((5, k), 1.0 / k as f64);
        let (nll, clamped) = nll_loss(p.view(), &[0, 1, 2, 3, 6]).unwrap();
        assert!((nll - (k as f64).ln()).abs() < 1e-15);
        assert_eq!(clamped, 0);
    }

    #[test]
    fn hand_computed_toy_batch() {
        // row 0: e=(1,2) c=(0,0) -> 5 ; row 1: e=(0,-1) c=(1,1) -> 1+4 = 5 ; mean 5
        let e = array![[1.0, 2.0], [0.0, -1.0]];
        let c = array![[0.0, 0.0], [1.0, 1.0]];
        // -(ln 0.5 + ln 0.25)/2 = (ln 2 + ln 4)/2 = 1.5 ln 2
        let p = array![[0.5, 0.25, 0.25], [0.5, 0.25, 0.25]];
        let v = losses(e.view(), c.view(), p.view(), &[0, 2]).unwrap();
        assert_eq!(v.mse, 5.0);
        assert!((v.nll - 1.5 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_probability_is_clamped_and_counted() {
        let p = array![[1.0, 0.0], [0.5, 0.5]];
        let (nll, clamped) = nll_loss(p.view(), &[1, 0]).unwrap();
        assert_eq!(clamped, 1);
        assert!((nll - (-(PROB_FLOOR.ln()) + 2f64.ln()) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn shape_and_label_errors() {
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((3, 3));
        assert!(mse_loss(a.view(), b.view()).is_err());
        assert!(nll_loss(a.view(), &[0]).is_err());
        assert!(nll_loss(a.view(), &[0, 3]).is_err());
    }

    #[test]
    fn logit_gradient_rows_sum_to_zero() {
        let p = array![[0.2, 0.3, 0.5], [0.1, 0.1, 0.8]];
        let g = nll_grad_logits(p.view(), &[2, 0]).unwrap();
        assert_eq!(g, array![[0.1, 0.15, -0.25], [-0.45, 0.05, 0.4]]);
    }
}
