//! Frame-level metrics, evaluation summaries and the curve/comparison
//! tables.

mod report;

pub use report::{
    compare_table, emit_curves, emit_se_curves, read_curves, CURVE_HEADER, SE_CURVE_HEADER,
    SUMMARY_HEADER,
};

use ndarray::{Array2, ArrayView2, Axis};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::network::{Model, Real, PROB_FLOOR};

/// Index of the row maximum; ties go to the lowest index.
pub fn argmax<F: Real>(row: &[F]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

fn check_labels(rows: usize, classes: usize, labels: &[usize]) -> Result<()> {
    if rows == 0 {
        return Err(Error::invalid("empty prediction matrix"));
    }
    if labels.len() != rows {
        return Err(Error::invalid(format!(
            "{} predictions but {} labels",
            rows,
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
    }
    Ok(())
}

/// Fraction of rows whose argmax differs from the label.
pub fn frame_error_rate<F: Real>(y_pred: ArrayView2<F>, labels: &[usize]) -> Result<f64> {
    check_labels(y_pred.nrows(), y_pred.ncols(), labels)?;
    let wrong = y_pred
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &l)| argmax(row.as_slice().unwrap_or(&row.to_vec())) != l)
        .count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Mean over rows of the squared Euclidean distance.
pub fn enhancement_mse<F: Real>(x_enh: ArrayView2<F>, x_clean: ArrayView2<F>) -> Result<f64> {
    if x_enh.dim() != x_clean.dim() {
        return Err(Error::invalid(format!(
            "enhanced {:?} vs clean {:?}",
            x_enh.dim(),
            x_clean.dim()
        )));
    }
    if x_enh.nrows() == 0 {
        return Err(Error::invalid("empty enhancement matrix"));
    }
    Ok(sum_sq_diff(x_enh, x_clean) / x_enh.nrows() as f64)
}

fn sum_sq_diff<F: Real>(a: ArrayView2<F>, b: ArrayView2<F>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let d = x.to_f64().unwrap_or(f64::NAN) - y.to_f64().unwrap_or(f64::NAN);
            d * d
        })
        .sum()
}

/// Metrics of a model over one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub num_frames: usize,
    pub fer: f64,
    /// Mean negative log-likelihood of the reference labels.
    pub nll: f64,
    /// Mean enhancement MSE; absent for systems without an enhancement stage.
    pub mse: Option<f64>,
    /// `confusion[label][predicted]`.
    pub confusion: Array2<u64>,
}

impl EvalSummary {
    pub fn num_classes(&self) -> usize {
        self.confusion.nrows()
    }

    /// Per-class reference counts (row sums of the confusion matrix).
    pub fn label_histogram(&self) -> Vec<u64> {
        self.confusion.sum_axis(Axis(1)).to_vec()
    }
}

/// Whatever subset of metrics a stage can produce.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub num_frames: usize,
    pub fer: Option<f64>,
    pub nll: Option<f64>,
    pub mse: Option<f64>,
    pub confusion: Option<Array2<u64>>,
}

impl Metrics {
    pub fn into_summary(self) -> Result<EvalSummary> {
        match (self.fer, self.nll, self.confusion) {
            (Some(fer), Some(nll), Some(confusion)) => Ok(EvalSummary {
                num_frames: self.num_frames,
                fer,
                nll,
                mse: self.mse,
                confusion,
            }),
            _ => Err(Error::invalid("no class predictions to summarize")),
        }
    }
}

/// Streams chunks of predictions into corpus-level metrics.
#[derive(Debug, Clone)]
pub struct EvalAccumulator {
    classes: usize,
    frames: usize,
    nll_sum: f64,
    mse_sum: f64,
    mse_frames: usize,
    confusion: Option<Array2<u64>>,
}

impl EvalAccumulator {
    pub fn new(classes: usize) -> Self {
        EvalAccumulator {
            classes,
            frames: 0,
            nll_sum: 0.0,
            mse_sum: 0.0,
            mse_frames: 0,
            confusion: None,
        }
    }

    pub fn add<F: Real>(
        &mut self,
        enhancement: Option<(ArrayView2<F>, ArrayView2<F>)>,
        y_pred: Option<ArrayView2<F>>,
        labels: &[usize],
    ) -> Result<()> {
        if let Some((e, c)) = enhancement {
            if e.dim() != c.dim() || e.nrows() != labels.len() {
                return Err(Error::invalid("enhancement chunk shape mismatch"));
            }
            self.mse_sum += sum_sq_diff(e, c);
            self.mse_frames += e.nrows();
        }
        if let Some(p) = y_pred {
            check_labels(p.nrows(), p.ncols(), labels)?;
            if p.ncols() != self.classes {
                return Err(Error::invalid(format!(
                    "{} output classes, expected {}",
                    p.ncols(),
                    self.classes
                )));
            }
            let classes = self.classes;
            let conf = self.confusion.get_or_insert_with(|| Array2::zeros((classes, classes)));
            let mut buf = Vec::with_capacity(classes);
            for (row, &l) in p.rows().into_iter().zip(labels) {
                buf.clear();
                buf.extend(row.iter().copied());
                conf[[l, argmax(&buf)]] += 1;
                let q = row[l].to_f64().unwrap_or(f64::NAN).max(PROB_FLOOR);
                self.nll_sum -= q.ln();
            }
        }
        self.frames += labels.len();
        Ok(())
    }

    pub fn finish(self) -> Result<Metrics> {
        if self.frames == 0 {
            return Err(Error::invalid("nothing to evaluate"));
        }
        let n = self.frames as f64;
        let fer = self.confusion.as_ref().map(|c| {
            let correct: u64 = (0..c.nrows()).map(|k| c[[k, k]]).sum();
            1.0 - correct as f64 / n
        });
        Ok(Metrics {
            num_frames: self.frames,
            fer,
            nll: self.confusion.as_ref().map(|_| self.nll_sum / n),
            mse: (self.mse_frames > 0).then(|| self.mse_sum / self.mse_frames as f64),
            confusion: self.confusion,
        })
    }
}

/// Inference-mode evaluation of `model` over every frame of `corpus`.
/// The model is only borrowed immutably; BN running statistics are read,
/// never updated.
pub fn evaluate<F: Real>(model: &Model<F>, corpus: &Corpus, chunk: usize) -> Result<EvalSummary> {
    if corpus.is_empty() {
        return Err(Error::invalid("empty evaluation corpus"));
    }
    let classes = model.num_classes();
    let mut acc = EvalAccumulator::new(classes);
    for frames in corpus.chunks(chunk.max(1)) {
        let b = corpus.batch::<F>(&frames);
        let (enh, probs) = model.predict(b.noisy.view())?;
        let pair = enh.as_ref().map(|e| (e.view(), b.clean.view()));
        acc.add(pair, Some(probs.view()), &b.labels)?;
    }
    acc.finish()?.into_summary()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_classifier_has_zero_error() {
        let labels = [0usize, 2, 1, 2];
        let mut y = Array2::<f64>::zeros((4, 3));
        for (i, &l) in labels.iter().enumerate() {
            y[[i, l]] = 1.0;
        }
        assert_eq!(frame_error_rate(y.view(), &labels).unwrap(), 0.0);
    }

    #[test]
    fn constant_prediction_on_balanced_labels() {
        let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
        let y = Array2::<f64>::from_elem((100, 10), 0.1);
        assert!((frame_error_rate(y.view(), &labels).unwrap() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        assert_eq!(argmax(&[0.2f64, 0.5, 0.5, 0.1]), 1);
        assert_eq!(argmax(&[1.0f32, 1.0]), 0);
    }

    #[test]
    fn empty_and_mismatched_inputs_are_rejected() {
        let y = Array2::<f64>::zeros((0, 3));
        assert!(frame_error_rate(y.view(), &[]).is_err());
        let y = Array2::<f64>::zeros((2, 3));
        assert!(frame_error_rate(y.view(), &[0]).is_err());
        assert!(frame_error_rate(y.view(), &[0, 3]).is_err());
        let a = Array2::<f64>::zeros((2, 3));
        let b = Array2::<f64>::zeros((3, 2));
        assert!(enhancement_mse(a.view(), b.view()).is_err());
    }

    #[test]
    fn unit_offset_mse_counts_coordinates() {
        let c = Array2::<f64>::from_shape_fn((7, 429), |(i, j)| (i * 3 + j) as f64 * 0.01);
        let e = &c + 1.0;
        assert_eq!(enhancement_mse(e.view(), c.view()).unwrap(), 429.0);
        assert_eq!(enhancement_mse(c.view(), c.view()).unwrap(), 0.0);
    }

    #[test]
    fn accumulator_matches_direct_metrics() {
        let p = array![[0.7, 0.2, 0.1], [0.1, 0.3, 0.6], [0.5, 0.4, 0.1], [0.2, 0.2, 0.6]];
        let labels = [0usize, 2, 1, 2];
        let mut acc = EvalAccumulator::new(3);
        acc.add::<f64>(None, Some(p.slice(ndarray::s![..2, ..])), &labels[..2]).unwrap();
        acc.add::<f64>(None, Some(p.slice(ndarray::s![2.., ..])), &labels[2..]).unwrap();
        let s = acc.finish().unwrap().into_summary().unwrap();
        assert_eq!(s.fer, frame_error_rate(p.view(), &labels).unwrap());
        let nll = -(0.7f64.ln() + 0.6f64.ln() + 0.4f64.ln() + 0.6f64.ln()) / 4.0;
        assert!((s.nll - nll).abs() < 1e-12);
        assert_eq!(s.confusion.sum(), 4);
        assert_eq!(s.label_histogram(), vec![1, 1, 2]);
        assert_eq!(s.mse, None);
    }
}
