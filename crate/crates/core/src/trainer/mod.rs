//! Minibatch SGD with the weighted joint update, dev-set monitoring,
//! learning-rate halving and patience stopping, plus the baseline system
//! modes and the pre-training ablation.

mod fit;
mod schedule;
mod step;
mod systems;

pub use fit::{fit, EpochEvent, FitOutcome, FitParams, Resume, SrInput, Stage};
pub use schedule::{Decision, Scheduler};
pub use step::{apply_joint_update, joint_gradients, se_step, sgd_step, single_step, sr_step, StepStats};
pub use systems::{
    enhance_corpus, pretrain_then_finetune, resume_system, run_system, sweep_lambda, write_sweep_table, EpochHook,
    SweepRow, SystemRun, SWEEP_HEADER,
};

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four systems compared in the baseline table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SystemMode {
    /// One classification network straight from noisy features.
    SingleBigDnn,
    /// Enhancement trained alone; recognizer trained on clean features.
    SePlusCleanSr,
    /// Enhancement trained alone; recognizer trained on its outputs.
    SePlusMatchedSr,
    /// Joint training of the cascade.
    Joint,
}

impl SystemMode {
    pub const ALL: [SystemMode; 4] = [
        SystemMode::SingleBigDnn,
        SystemMode::SePlusCleanSr,
        SystemMode::SePlusMatchedSr,
        SystemMode::Joint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SystemMode::SingleBigDnn => "single-big-dnn",
            SystemMode::SePlusCleanSr => "se-plus-clean-sr",
            SystemMode::SePlusMatchedSr => "se-plus-matched-sr",
            SystemMode::Joint => "joint",
        }
    }
}

impl std::fmt::Display for SystemMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown system mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pretrain {
    None,
    /// Initialize from the matched-training system, then fine-tune jointly.
    MatchedInit,
}

impl FromStr for Pretrain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Pretrain::None),
            "matched-init" => Ok(Pretrain::MatchedInit),
            other => Err(Error::Config(format!("unknown pretrain option {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    /// Weight of the recognition gradient in enhancement updates.
    pub lambda: f64,
    pub batch_size: usize,
    /// Relative dev improvement below which the learning rate halves and an
    /// epoch counts as stalled.
    pub halving_threshold: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub mode: SystemMode,
    pub pretrain: Pretrain,
    /// Learning-rate factor of the fine-tuning phase after pre-training.
    pub finetune_lr_factor: f64,
    /// Epoch cap of the fine-tuning phase; defaults to `max_epochs`.
    pub finetune_max_epochs: Option<usize>,
    /// Frames per evaluation chunk.
    pub eval_chunk: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.08,
            lambda: 0.05,
            batch_size: 128,
            halving_threshold: 0.001,
            patience: 4,
            max_epochs: 30,
            seed: 0,
            mode: SystemMode::Joint,
            pretrain: Pretrain::None,
            finetune_lr_factor: 0.25,
            finetune_max_epochs: None,
            eval_chunk: 2048,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be non-negative".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Config("batch_size must be at least 2 (batch normalization)".into()));
        }
        if !(self.halving_threshold >= 0.0) {
            return Err(Error::Config("halving_threshold must be non-negative".into()));
        }
        if !(self.finetune_lr_factor > 0.0) {
            return Err(Error::Config("finetune_lr_factor must be positive".into()));
        }
        if self.eval_chunk == 0 {
            return Err(Error::Config("eval_chunk must be positive".into()));
        }
        if self.pretrain == Pretrain::MatchedInit && self.mode != SystemMode::Joint {
            return Err(Error::invalid(format!(
                "pretrain = matched-init only applies to joint mode, not {}",
                self.mode
            )));
        }
        Ok(())
    }
}

/// Metrics of one training epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub train_mse: f64,
    pub train_nll: f64,
    pub dev_nll: f64,
    pub dev_fer: f64,
    pub dev_mse: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub seconds: f64,
}
