use std::fmt::Write as _;
use std::path::Path;

use ndarray::{s, Array2};

use super::fit::{fit, EpochEvent, FitOutcome, FitParams, Resume, SrInput, Stage};
use super::{EpochReport, Pretrain, SystemMode, TrainConfig};
use crate::corpus::{Corpus, Dataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalSummary};
use crate::io::write_atomic;
use crate::network::{JointNetwork, Model, NetConfig, Stack};
use crate::rng::{derive_seed, stream};

/// Receives every epoch of every training phase, tagged with the phase name
/// (`se`, `sr`, `joint`, `single`, `finetune`).
pub type EpochHook<'a> = dyn FnMut(&str, EpochEvent<'_, f32>) -> Result<()> + 'a;

/// Result of training one system end to end.
#[derive(Debug, Clone)]
pub struct SystemRun {
    pub mode: SystemMode,
    pub pretrain: Pretrain,
    pub model: Model<f32>,
    /// Curves of the final classification phase.
    pub reports: Vec<EpochReport>,
    /// Curves of the enhancement-only phase, if any.
    pub se_reports: Vec<EpochReport>,
    /// Curves of the matched pre-training classification phase, if any.
    pub pretrain_reports: Vec<EpochReport>,
    pub dev: EvalSummary,
    /// Metrics on the held-out corpus (test if present, otherwise dev).
    pub eval: EvalSummary,
}

fn params(cfg: &TrainConfig, lr: f64, max_epochs: usize, seed: u64) -> FitParams {
    FitParams {
        lr,
        batch_size: cfg.batch_size,
        threshold: cfg.halving_threshold,
        patience: cfg.patience,
        max_epochs,
        seed,
        eval_chunk: cfg.eval_chunk,
    }
}

// Initial weights depend only on (seed, stack role), so every mode starts
// from the same enhancement and recognition parameters.
fn init_se(net: &NetConfig, seed: u64) -> Stack<f32> {
    net.build_se(&mut stream(seed, &[1]))
}

fn init_sr(net: &NetConfig, seed: u64) -> Stack<f32> {
    net.build_sr(&mut stream(seed, &[2]))
}

fn init_single(net: &NetConfig, seed: u64) -> Stack<f32> {
    net.build_single(&mut stream(seed, &[3]))
}

fn run_fit(
    phase: &str,
    stage: Stage<f32>,
    data: &Dataset,
    p: FitParams,
    hook: &mut EpochHook<'_>,
) -> Result<FitOutcome<f32>> {
    log::info!("training phase {phase}");
    fit(stage, &data.train, &data.dev, p, None, &mut |ev| hook(phase, ev))
}

/// Inference-mode enhancement outputs for every frame of `corpus`.
pub fn enhance_corpus(se: &Stack<f32>, corpus: &Corpus, chunk: usize) -> Result<Array2<f32>> {
    let mut out = Array2::zeros((corpus.num_frames(), se.output_dim()));
    let mut row = 0;
    for frames in corpus.chunks(chunk.max(1)) {
        let b = corpus.batch::<f32>(&frames);
        let e = se.forward_inference(b.noisy.view())?;
        out.slice_mut(s![row..row + e.nrows(), ..]).assign(&e);
        row += e.nrows();
    }
    Ok(out)
}

fn train_se(cfg: &TrainConfig, net: &NetConfig, data: &Dataset, hook: &mut EpochHook<'_>) -> Result<(Stack<f32>, Vec<EpochReport>)> {
    let out = run_fit("se", Stage::SeOnly(init_se(net, cfg.seed)), data, params(cfg, cfg.lr, cfg.max_epochs, cfg.seed), hook)?;
    match out.best {
        Stage::SeOnly(se) => Ok((se, out.reports)),
        _ => unreachable!("fit preserves the stage kind"),
    }
}

fn train_sr(
    cfg: &TrainConfig,
    net: &NetConfig,
    data: &Dataset,
    input: SrInput,
    hook: &mut EpochHook<'_>,
) -> Result<(Stack<f32>, Vec<EpochReport>)> {
    let stage = Stage::SrOnly { stack: init_sr(net, cfg.seed), input };
    let out = run_fit("sr", stage, data, params(cfg, cfg.lr, cfg.max_epochs, cfg.seed), hook)?;
    match out.best {
        Stage::SrOnly { stack, .. } => Ok((stack, out.reports)),
        _ => unreachable!("fit preserves the stage kind"),
    }
}

fn finish(
    mode: SystemMode,
    pretrain: Pretrain,
    model: Model<f32>,
    reports: Vec<EpochReport>,
    se_reports: Vec<EpochReport>,
    pretrain_reports: Vec<EpochReport>,
    data: &Dataset,
    chunk: usize,
) -> Result<SystemRun> {
    let dev = evaluate(&model, &data.dev, chunk)?;
    let eval = match &data.test {
        Some(t) => evaluate(&model, t, chunk)?,
        None => dev.clone(),
    };
    log::info!("{mode}: eval FER {:.4}, NLL {:.4}", eval.fer, eval.nll);
    Ok(SystemRun { mode, pretrain, model, reports, se_reports, pretrain_reports, dev, eval })
}

fn check_data(net: &NetConfig, data: &Dataset) -> Result<()> {
    if data.num_classes > net.num_classes {
        return Err(Error::invalid(format!(
            "corpus has {} classes but the network only {}",
            data.num_classes, net.num_classes
        )));
    }
    Ok(())
}

/// Train and evaluate one system of the baseline table.
pub fn run_system(cfg: &TrainConfig, net: &NetConfig, data: &Dataset, hook: &mut EpochHook<'_>) -> Result<SystemRun> {
    cfg.validate()?;
    net.validate()?;
    check_data(net, data)?;
    if cfg.pretrain == Pretrain::MatchedInit {
        return pretrain_then_finetune(cfg, net, data, hook);
    }
    let chunk = cfg.eval_chunk;
    match cfg.mode {
        SystemMode::Joint | SystemMode::SingleBigDnn => resume_system(cfg, net, data, None, hook),
        SystemMode::SePlusCleanSr => {
            let (se, se_reports) = train_se(cfg, net, data, hook)?;
            let (sr, reports) = train_sr(cfg, net, data, SrInput::CleanWindows, hook)?;
            let model = Model::Joint(JointNetwork::from_parts(se, sr)?);
            finish(cfg.mode, cfg.pretrain, model, reports, se_reports, vec![], data, chunk)
        }
        SystemMode::SePlusMatchedSr => {
            let (se, se_reports) = train_se(cfg, net, data, hook)?;
            let input = SrInput::Precomputed {
                train: enhance_corpus(&se, &data.train, chunk)?,
                dev: enhance_corpus(&se, &data.dev, chunk)?,
            };
            let (sr, reports) = train_sr(cfg, net, data, input, hook)?;
            let model = Model::Joint(JointNetwork::from_parts(se, sr)?);
            finish(cfg.mode, cfg.pretrain, model, reports, se_reports, vec![], data, chunk)
        }
    }
}

/// The single-phase systems (joint without pre-training, single network),
/// optionally continuing from a saved training state. `resume.best`
/// and the model in `last` must be of the matching kind.
pub fn resume_system(
    cfg: &TrainConfig,
    net: &NetConfig,
    data: &Dataset,
    resume: Option<(Resume<f32>, Model<f32>)>,
    hook: &mut EpochHook<'_>,
) -> Result<SystemRun> {
    cfg.validate()?;
    net.validate()?;
    check_data(net, data)?;
    let (phase, fresh) = match (cfg.mode, cfg.pretrain) {
        (SystemMode::Joint, Pretrain::None) => (
            "joint",
            Stage::Joint {
                net: JointNetwork::from_parts(init_se(net, cfg.seed), init_sr(net, cfg.seed))?,
                lambda: cfg.lambda,
            },
        ),
        (SystemMode::SingleBigDnn, Pretrain::None) => ("single", Stage::Single(init_single(net, cfg.seed))),
        (mode, _) => {
            return Err(Error::invalid(format!("{mode} with pre-training has several phases and cannot be resumed")))
        }
    };
    let (start, resume) = match resume {
        None => (fresh, None),
        Some((r, last)) => {
            let stage = match (last, &fresh) {
                (Model::Joint(n), Stage::Joint { lambda, .. }) => Stage::Joint { net: n, lambda: *lambda },
                (Model::Single(s), Stage::Single(_)) => Stage::Single(s),
                _ => return Err(Error::invalid("checkpoint model does not match the system mode")),
            };
            if std::mem::discriminant(&r.best) != std::mem::discriminant(&stage) {
                return Err(Error::invalid("best checkpoint does not match the system mode"));
            }
            (stage, Some(r))
        }
    };
    log::info!("training phase {phase}");
    let p = params(cfg, cfg.lr, cfg.max_epochs, cfg.seed);
    let out = fit(start, &data.train, &data.dev, p, resume, &mut |ev| hook(phase, ev))?;
    let model = match out.best {
        Stage::Joint { net, .. } => Model::Joint(net),
        Stage::Single(s) => Model::Single(s),
        _ => unreachable!("fit preserves the stage kind"),
    };
    finish(cfg.mode, cfg.pretrain, model, out.reports, vec![], vec![], data, cfg.eval_chunk)
}

/// Train the matched system, then fine-tune the cascade jointly at a reduced
/// learning rate starting from its weights.
pub fn pretrain_then_finetune(
    cfg: &TrainConfig,
    net: &NetConfig,
    data: &Dataset,
    hook: &mut EpochHook<'_>,
) -> Result<SystemRun> {
    if cfg.pretrain != Pretrain::MatchedInit || cfg.mode != SystemMode::Joint {
        return Err(Error::invalid("pre-training requires mode = joint and pretrain = matched-init"));
    }
    let matched_cfg = TrainConfig { mode: SystemMode::SePlusMatchedSr, pretrain: Pretrain::None, ..cfg.clone() };
    let matched = run_system(&matched_cfg, net, data, hook)?;
    let Model::Joint(init) = matched.model else { unreachable!("matched systems are cascades") };
    let lr = cfg.lr * cfg.finetune_lr_factor;
    let epochs = cfg.finetune_max_epochs.unwrap_or(cfg.max_epochs);
    let stage = Stage::Joint { net: init, lambda: cfg.lambda };
    let out = run_fit("finetune", stage, data, params(cfg, lr, epochs, derive_seed(cfg.seed, &[7])), hook)?;
    let Stage::Joint { net: best, .. } = out.best else { unreachable!() };
    finish(
        cfg.mode,
        cfg.pretrain,
        Model::Joint(best),
        out.reports,
        matched.se_reports,
        matched.reports,
        data,
        cfg.eval_chunk,
    )
}

/// One row of a λ sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    pub train_fer: f64,
    pub dev_fer: f64,
    pub epochs: usize,
}

/// One joint training run per λ with shared data and seed.
pub fn sweep_lambda(
    cfg: &TrainConfig,
    net: &NetConfig,
    data: &Dataset,
    lambdas: &[f64],
    hook: &mut EpochHook<'_>,
) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() {
        return Err(Error::invalid("empty lambda list"));
    }
    lambdas
        .iter()
        .map(|&lambda| {
            let run_cfg = TrainConfig { lambda, mode: SystemMode::Joint, ..cfg.clone() };
            log::info!("sweep: lambda = {lambda}");
            let run = run_system(&run_cfg, net, data, hook)?;
            let train = evaluate(&run.model, &data.train, cfg.eval_chunk)?;
            Ok(SweepRow { lambda, train_fer: train.fer, dev_fer: run.dev.fer, epochs: run.reports.len() })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "lambda,train_fer,dev_fer,epochs";

pub fn write_sweep_table(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.lambda, r.train_fer, r.dev_fer, r.epochs).unwrap();
    }
    write_atomic(path, out.as_bytes())
}
