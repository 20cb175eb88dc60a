use jointbn::eval::{frame_error_rate, EvalAccumulator};
use jointbn::rng::stream;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

#[test]
fn chance_level_error_with_twenty_classes() {
    let mut rng = stream(20, &[]);
    let (n, k) = (100_000, 20);
    let y = Array2::<f64>::from_shape_simple_fn((n, k), || rng.random());
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let fer = frame_error_rate(y.view(), &labels).unwrap();
    assert!((fer - 0.95).abs() < 0.01, "{fer}");
}

fn scores(k: usize) -> impl Strategy<Value = (Array2<f64>, Vec<usize>)> {
    (2usize..30).prop_flat_map(move |n| {
        (
            prop::collection::vec(-5.0f64..5.0, n * k),
            prop::collection::vec(0..k, n),
        )
            .prop_map(move |(v, l)| (Array2::from_shape_vec((n, k), v).unwrap(), l))
    })
}

proptest! {
    #[test]
    fn monotone_row_transforms_keep_the_error_rate((y, labels) in scores(6), a in 0.1f64..4.0, b in -3.0f64..3.0) {
        let fer = frame_error_rate(y.view(), &labels).unwrap();
        let warped = y.mapv(|v| (a * v + b).exp());
        prop_assert_eq!(frame_error_rate(warped.view(), &labels).unwrap(), fer);
        let cubed = y.mapv(|v| v * v * v);
        prop_assert_eq!(frame_error_rate(cubed.view(), &labels).unwrap(), fer);
    }

    #[test]
    fn confusion_accounts_for_every_frame((y, labels) in scores(4)) {
        let mut acc = EvalAccumulator::new(4);
        let probs = y.mapv(f64::exp);
        let probs = &probs / &probs.sum_axis(ndarray::Axis(1)).insert_axis(ndarray::Axis(1));
        acc.add::<f64>(None, Some(probs.view()), &labels).unwrap();
        let summary = acc.finish().unwrap().into_summary().unwrap();
        prop_assert_eq!(summary.confusion.sum(), labels.len() as u64);
        let trace: u64 = (0..4).map(|i| summary.confusion[[i, i]]).sum();
        let fer = 1.0 - trace as f64 / labels.len() as f64;
        prop_assert!((summary.fer - fer).abs() < 1e-12);
        prop_assert!((summary.fer - frame_error_rate(probs.view(), &labels).unwrap()).abs() < 1e-12);
    }
}
