use ndarray::{Array1, ArrayView2};
use num_traits::Float;

use super::FeatureSequence;
use crate::error::{Error, Result};
use crate::{INPUT_CONTEXT, TARGET_CONTEXT};

/// One enhancement/classification example centred on a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// 21 noisy frames centred on t, flattened frame-major (819 values).
    pub noisy_window: Array1<f64>,
    /// 11 clean frames centred on t, flattened frame-major (429 values).
    pub clean_target: Array1<f64>,
    pub label: usize,
}

/// Copy frames `[t - half, t + half]` of `frames` into `out`, replicating the
/// first/last frame past either edge. `out.len()` must be `(2 half + 1) * dim`.
pub fn gather_window<S, D>(frames: ArrayView2<S>, t: usize, half: usize, out: &mut [D])
where
    S: Copy + Into<f64>,
    D: Float,
{
    let (t_len, dim) = frames.dim();
    debug_assert_eq!(out.len(), (2 * half + 1) * dim);
    let last = t_len as isize - 1;
    for (slot, chunk) in out.chunks_exact_mut(dim).enumerate() {
        let src = (t as isize + slot as isize - half as isize).clamp(0, last) as usize;
        let row = frames.row(src);
        for (o, &v) in chunk.iter_mut().zip(row.iter()) {
            *o = D::from(v.into()).unwrap();
        }
    }
}

/// One example per frame: noisy context of ±10 frames, clean target of ±5
/// frames, label of the centre frame.
pub fn window_examples(
    noisy: &FeatureSequence,
    clean: &FeatureSequence,
    labels: &[usize],
) -> Result<Vec<TrainingExample>> {
    let t_len = noisy.num_frames();
    if clean.num_frames() != t_len || labels.len() != t_len {
        return Err(Error::invalid(format!(
            "length mismatch: noisy {t_len}, clean {}, labels {}",
            clean.num_frames(),
            labels.len()
        )));
    }
    let dim = noisy.frames.ncols();
    let in_half = INPUT_CONTEXT / 2;
    let out_half = TARGET_CONTEXT / 2;
    Ok((0..t_len)
        .map(|t| {
            let mut noisy_window = Array1::zeros(INPUT_CONTEXT * dim);
            let mut clean_target = Array1::zeros(TARGET_CONTEXT * dim);
            gather_window(
                noisy.frames.view(),
                t,
                in_half,
                noisy_window.as_slice_mut().unwrap(),
            );
            gather_window(
                clean.frames.view(),
                t,
                out_half,
                clean_target.as_slice_mut().unwrap(),
            );
            TrainingExample {
                noisy_window,
                clean_target,
                label: labels[t],
            }
        })
        .collect())
}
