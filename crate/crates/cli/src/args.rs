use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use jointbn::config::ExperimentConfig;
use jointbn::simulate::NoiseKind;
use jointbn::trainer::{Pretrain, SystemMode};

#[derive(Debug, Parser)]
#[command(name = "jointbn", version, about = "Batch-normalized joint training of speech enhancement and phone classification")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a contaminated corpus: waveforms, labels, manifests and the config snapshot.
    GenData(GenDataArgs),
    /// Compute MFCC features for every manifest of a data directory.
    Extract(ExtractArgs),
    /// Train one system and write checkpoints and metrics into a run directory.
    Train(TrainArgs),
    /// Evaluate a run's best checkpoint on a data split.
    Eval(EvalArgs),
    /// Train the joint system once per λ and tabulate train/dev frame error.
    Sweep(SweepArgs),
    /// Join evaluation summaries of several runs into one table.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct SimOverrides {
    /// Corpus seed (class signatures and every utterance).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of phone-like classes.
    #[arg(long)]
    pub num_classes: Option<usize>,
    /// Utterance length in seconds.
    #[arg(long)]
    pub utterance_seconds: Option<f64>,
    /// Shortest segment in frames.
    #[arg(long)]
    pub segment_min: Option<usize>,
    /// Longest segment in frames.
    #[arg(long)]
    pub segment_max: Option<usize>,
    /// Reverberation time in seconds.
    #[arg(long)]
    pub t60: Option<f64>,
    /// Utterance-wide SNR in dB (`inf` disables noise).
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Direct-to-reverberant energy ratio of the impulse responses, in dB.
    #[arg(long)]
    pub drr_db: Option<f64>,
    /// Additive noise type: white or babble-like.
    #[arg(long)]
    pub noise_kind: Option<NoiseKind>,
    /// Seed mixed into the impulse-response and noise streams.
    #[arg(long)]
    pub contamination_seed: Option<u64>,
    /// Training utterances.
    #[arg(long)]
    pub train: Option<usize>,
    /// Development utterances.
    #[arg(long)]
    pub dev: Option<usize>,
    /// Test utterances (0 disables the test split).
    #[arg(long)]
    pub test: Option<usize>,
}

impl SimOverrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let s = &mut cfg.simulate;
        set(&mut s.seed, self.seed);
        set(&mut s.num_classes, self.num_classes);
        set(&mut cfg.network.num_classes, self.num_classes);
        set(&mut s.utterance_seconds, self.utterance_seconds);
        set(&mut s.segment_min_frames, self.segment_min);
        set(&mut s.segment_max_frames, self.segment_max);
        let c = &mut cfg.contamination;
        set(&mut c.t60, self.t60);
        set(&mut c.snr_db, self.snr_db);
        set(&mut c.drr_db, self.drr_db);
        set(&mut c.noise_kind, self.noise_kind);
        set(&mut c.seed, self.contamination_seed);
        set(&mut cfg.corpus.train, self.train);
        set(&mut cfg.corpus.dev, self.dev);
        set(&mut cfg.corpus.test, self.test);
    }
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Experiment config (TOML); defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output data directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub sim: SimOverrides,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    /// Data directory written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    /// Training seed (initialization, shuffling, dropout).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight of the recognition gradient in enhancement updates.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// single-big-dnn, se-plus-clean-sr, se-plus-matched-sr or joint.
    #[arg(long)]
    pub mode: Option<SystemMode>,
    /// Replace every batch-normalization layer by the identity.
    #[arg(long)]
    pub no_batchnorm: bool,
    /// none or matched-init (joint mode only).
    #[arg(long)]
    pub pretrain: Option<Pretrain>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Consecutive non-improving epochs before stopping.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Relative dev improvement below which the learning rate halves.
    #[arg(long)]
    pub halving_threshold: Option<f64>,
    /// Dropout probability of hidden layers.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Initial batch-normalization scale.
    #[arg(long)]
    pub gamma_init: Option<f64>,
    /// Hidden widths of both stacks, e.g. 256,256,256.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        let t = &mut cfg.trainer;
        set(&mut t.seed, self.seed);
        set(&mut t.lambda, self.lambda);
        set(&mut t.mode, self.mode);
        set(&mut t.pretrain, self.pretrain);
        set(&mut t.lr, self.lr);
        set(&mut t.batch_size, self.batch_size);
        set(&mut t.max_epochs, self.max_epochs);
        set(&mut t.patience, self.patience);
        set(&mut t.halving_threshold, self.halving_threshold);
        let n = &mut cfg.network;
        if self.no_batchnorm {
            n.batchnorm = false;
        }
        set(&mut n.dropout, self.dropout);
        set(&mut n.gamma_init, self.gamma_init);
        if let Some(h) = &self.hidden {
            n.se_hidden = h.clone();
            n.sr_hidden = h.clone();
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Data directory written by gen-data (and optionally extract).
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for checkpoints, metrics and the effective config.
    #[arg(long)]
    pub run: PathBuf,
    /// Config file overriding the data directory's snapshot.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from the run directory's last checkpoint.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub run: PathBuf,
    /// Split to evaluate: train, dev or test.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the sweep table and per-λ curves.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated λ values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub lambdas: Vec<f64>,
    #[command(flatten)]
    pub train: TrainOverrides,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Run directories, each holding an evaluation summary.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Split whose summaries are compared.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Where to write the table.
    #[arg(long, default_value = "compare.csv")]
    pub out: PathBuf,
}
