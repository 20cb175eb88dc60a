use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::schedule::Scheduler;
use super::step::{sgd_step, se_step, single_step, sr_step};
use super::EpochReport;
use crate::corpus::{gather_rows, Corpus};
use crate::error::Result;
use crate::eval::{EvalAccumulator, Metrics};
use crate::network::{JointNetwork, Model, Real, RngState, Stack, TrainerState};
use crate::rng;

/// Where a standalone recognizer takes its 429-dim input from.
#[derive(Debug, Clone, PartialEq)]
pub enum SrInput {
    /// Clean target windows.
    CleanWindows,
    /// Per-frame inputs computed ahead of time (frozen enhancement outputs),
    /// one row per global frame of the train/dev corpora.
    Precomputed { train: Array2<f32>, dev: Array2<f32> },
}

/// What one call to [`fit`] trains.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage<F> {
    Joint { net: JointNetwork<F>, lambda: f64 },
    SeOnly(Stack<F>),
    SrOnly { stack: Stack<F>, input: SrInput },
    Single(Stack<F>),
}

impl<F: Real> Stage<F> {
    /// The stage as a deployable model; `None` for the single-stack phases
    /// of the staged baselines.
    pub fn to_model(&self) -> Option<Model<F>> {
        match self {
            Stage::Joint { net, .. } => Some(Model::Joint(net.clone())),
            Stage::Single(s) => Some(Model::Single(s.clone())),
            _ => None,
        }
    }

    fn tag(&self) -> u64 {
        match self {
            Stage::Joint { .. } => 1,
            Stage::SeOnly(_) => 2,
            Stage::SrOnly { .. } => 3,
            Stage::Single(_) => 4,
        }
    }

    /// Whether the scheduler monitors dev MSE rather than dev NLL.
    fn monitors_mse(&self) -> bool {
        matches!(self, Stage::SeOnly(_))
    }

    fn train_batch(
        &mut self,
        corpus: &Corpus,
        frames: &[usize],
        lr: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64)> {
        match self {
            Stage::Joint { net, lambda } => {
                let b = corpus.batch::<F>(frames);
                let s = sgd_step(net, &b, lr, *lambda, rng)?;
                Ok((s.mse, s.nll))
            }
            Stage::SeOnly(se) => {
                let b = corpus.batch::<F>(frames);
                Ok((se_step(se, b.noisy.view(), b.clean.view(), lr, rng)?, f64::NAN))
            }
            Stage::SrOnly { stack, input } => {
                let (x, labels) = match input {
                    SrInput::CleanWindows => {
                        let b = corpus.batch::<F>(frames);
                        (b.clean, b.labels)
                    }
                    SrInput::Precomputed { train, .. } => {
                        (gather_rows(train.view(), frames), corpus.labels_of(frames))
                    }
                };
                Ok((f64::NAN, sr_step(stack, x.view(), &labels, lr, rng)?))
            }
            Stage::Single(stack) => {
                let b = corpus.batch::<F>(frames);
                Ok((f64::NAN, single_step(stack, b.noisy.view(), &b.labels, lr, rng)?))
            }
        }
    }

    /// Inference-mode metrics on `corpus` (the dev set during training).
    pub fn evaluate(&self, corpus: &Corpus, chunk: usize) -> Result<Metrics> {
        let mut acc = EvalAccumulator::new(corpus.num_classes.max(self.num_classes()));
        for frames in corpus.chunks(chunk) {
            match self {
                Stage::Joint { net, .. } => {
                    let b = corpus.batch::<F>(&frames);
                    let (e, p) = net.forward_inference(b.noisy.view())?;
                    acc.add(Some((e.view(), b.clean.view())), Some(p.view()), &b.labels)?;
                }
                Stage::SeOnly(se) => {
                    let b = corpus.batch::<F>(&frames);
                    let e = se.forward_inference(b.noisy.view())?;
                    acc.add(Some((e.view(), b.clean.view())), None, &b.labels)?;
                }
                Stage::SrOnly { stack, input } => {
                    let (x, labels) = match input {
                        SrInput::CleanWindows => {
                            let b = corpus.batch::<F>(&frames);
                            (b.clean, b.labels)
                        }
                        SrInput::Precomputed { dev, .. } => {
                            (gather_rows(dev.view(), &frames), corpus.labels_of(&frames))
                        }
                    };
                    let p = stack.forward_inference(x.view())?;
                    acc.add(None, Some(p.view()), &labels)?;
                }
                Stage::Single(stack) => {
                    let b = corpus.batch::<F>(&frames);
                    let p = stack.forward_inference(b.noisy.view())?;
                    acc.add(None, Some(p.view()), &b.labels)?;
                }
            }
        }
        acc.finish()
    }

    fn num_classes(&self) -> usize {
        match self {
            Stage::Joint { net, .. } => net.sr.output_dim(),
            Stage::SeOnly(_) => 0,
            Stage::SrOnly { stack, .. } | Stage::Single(stack) => stack.output_dim(),
        }
    }
}

/// Loop parameters of one [`fit`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub lr: f64,
    pub batch_size: usize,
    pub threshold: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub eval_chunk: usize,
}

/// State handed to the per-epoch callback.
pub struct EpochEvent<'a, F> {
    pub report: &'a EpochReport,
    pub stage: &'a Stage<F>,
    pub state: &'a TrainerState,
    pub rng: RngState,
    pub new_best: bool,
}

/// Where to continue an interrupted run from.
#[derive(Debug, Clone, PartialEq)]
pub struct Resume<F> {
    pub state: TrainerState,
    pub rng: RngState,
    pub best: Stage<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome<F> {
    /// Snapshot with the lowest monitored dev metric.
    pub best: Stage<F>,
    pub last: Stage<F>,
    pub reports: Vec<EpochReport>,
    pub state: TrainerState,
    pub rng: RngState,
}

/// Train `stage` on `train`, monitoring `dev` after every epoch.
///
/// Each epoch visits a fresh permutation of all training frames drawn from
/// an epoch-indexed stream; a trailing minibatch of fewer than two frames is
/// dropped. Dropout masks come from one continuous stream whose position is
/// part of the returned state.
pub fn fit<F: Real>(
    stage: Stage<F>,
    train: &Corpus,
    dev: &Corpus,
    params: FitParams,
    resume: Option<Resume<F>>,
    on_epoch: &mut dyn FnMut(EpochEvent<'_, F>) -> Result<()>,
) -> Result<FitOutcome<F>> {
    if train.is_empty() || dev.is_empty() {
        return Err(crate::Error::invalid("training and dev corpora must be non-empty"));
    }
    let tag = stage.tag();
    let mut current = stage;
    let (mut sched, mut drop_rng, mut best) = match resume {
        Some(r) => (
            Scheduler::resume(r.state, params.threshold, params.patience, params.max_epochs),
            r.rng.restore(),
            r.best,
        ),
        None => (
            Scheduler::new(params.lr, params.threshold, params.patience, params.max_epochs),
            rng::stream(params.seed, &[tag, u64::MAX]),
            current.clone(),
        ),
    };
    let mut reports = Vec::new();
    let mut order: Vec<usize> = (0..train.num_frames()).collect();
    while !sched.finished() {
        let epoch = sched.state.epochs_done + 1;
        let started = Instant::now();
        let lr = sched.lr();
        order.sort_unstable();
        order.shuffle(&mut rng::stream(params.seed, &[tag, epoch as u64]));
        let (mut mse_sum, mut nll_sum, mut batches) = (0.0, 0.0, 0usize);
        for frames in order.chunks(params.batch_size) {
            if frames.len() < 2 {
                continue;
            }
            let (mse, nll) = current.train_batch(train, frames, lr, &mut drop_rng)?;
            mse_sum += mse;
            nll_sum += nll;
            batches += 1;
        }
        let dev_eval = current.evaluate(dev, params.eval_chunk)?;
        let monitored = if current.monitors_mse() {
            dev_eval.mse.unwrap_or(f64::NAN)
        } else {
            dev_eval.nll.unwrap_or(f64::NAN)
        };
        if !monitored.is_finite() {
            return Err(crate::Error::numeric(
                format!("epoch {epoch}"),
                "non-finite dev metric",
            ));
        }
        let decision = sched.observe(monitored);
        if decision.new_best {
            best = current.clone();
        }
        let report = EpochReport {
            epoch,
            train_mse: mse_sum / batches.max(1) as f64,
            train_nll: nll_sum / batches.max(1) as f64,
            dev_nll: dev_eval.nll.unwrap_or(f64::NAN),
            dev_fer: dev_eval.fer.unwrap_or(f64::NAN),
            dev_mse: dev_eval.mse.unwrap_or(f64::NAN),
            lr,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train mse {:.4} nll {:.4} | dev nll {:.4} fer {:.4} mse {:.4} | lr {:.5}{}",
            report.train_mse,
            report.train_nll,
            report.dev_nll,
            report.dev_fer,
            report.dev_mse,
            lr,
            if decision.halved { " (halving)" } else { "" }
        );
        on_epoch(EpochEvent {
            report: &report,
            stage: &current,
            state: &sched.state,
            rng: RngState::capture(&drop_rng),
            new_best: decision.new_best,
        })?;
        reports.push(report);
    }
    Ok(FitOutcome {
        best,
        last: current,
        reports,
        state: sched.state,
        rng: RngState::capture(&drop_rng),
    })
}
