use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use jointbn::config::{extract_manifest, write_split, ExperimentConfig};
use jointbn::corpus::{Corpus, Dataset};
use jointbn::eval::{compare_table, emit_curves, emit_se_curves, evaluate, read_curves, EvalSummary};
use jointbn::io::write_atomic;
use jointbn::network::{Checkpoint, Model};
use jointbn::simulate::Split;
use jointbn::trainer::{
    resume_system, run_system, sweep_lambda, write_sweep_table, EpochEvent, EpochReport, Pretrain, Resume,
    Stage, SystemMode,
};
use jointbn::{Error, Result};

use crate::args::{Command, CompareArgs, EvalArgs, ExtractArgs, GenDataArgs, SweepArgs, TrainArgs};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Sweep(a) => sweep(a),
        Command::Compare(a) => compare(a),
    }
}

const CONFIG_FILE: &str = "config.toml";

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::invalid(format!("missing prerequisite {}", path.display())))
    }
}

fn mkdir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn parse_split(name: &str) -> Result<Split> {
    Split::ALL
        .into_iter()
        .find(|s| s.name() == name)
        .ok_or_else(|| Error::invalid(format!("unknown split {name:?} (train, dev or test)")))
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    a.sim.apply(&mut cfg);
    cfg.validate()?;
    mkdir(&a.out)?;
    for split in Split::ALL {
        if cfg.corpus.count(split) == 0 {
            continue;
        }
        let utts = cfg.simulate_split(split)?;
        let manifest = write_split(&a.out, split, &utts)?;
        log::info!("{}: {} utterances -> {}", split.name(), utts.len(), manifest.display());
    }
    cfg.save(&a.out.join(CONFIG_FILE))
}

/// Feature manifest when `extract` has run, otherwise the waveform one.
fn manifest_path(data: &Path, split: Split) -> PathBuf {
    let feat = data.join(format!("{}.feat.list", split.name()));
    if feat.exists() {
        feat
    } else {
        data.join(format!("{}.list", split.name()))
    }
}

fn extract(a: ExtractArgs) -> Result<()> {
    let cfg_path = a.data.join(CONFIG_FILE);
    require(&cfg_path)?;
    let cfg = ExperimentConfig::load(&cfg_path)?;
    for split in Split::ALL {
        let src = a.data.join(format!("{}.list", split.name()));
        if !src.exists() {
            continue;
        }
        let manifest = extract_manifest(&src, &cfg.features, &a.data)?;
        let dst = a.data.join(format!("{}.feat.list", split.name()));
        manifest.write(&dst)?;
        log::info!("{}: {} feature files -> {}", split.name(), manifest.len(), dst.display());
    }
    Ok(())
}

fn load_config(data: &Path, explicit: Option<&Path>) -> Result<ExperimentConfig> {
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None => data.join(CONFIG_FILE),
    };
    require(&path)?;
    ExperimentConfig::load(&path)
}

fn load_dataset(data: &Path, cfg: &ExperimentConfig) -> Result<Dataset> {
    let load = |split| -> Result<Corpus> {
        let p = manifest_path(data, split);
        require(&p)?;
        Corpus::load(&p, &cfg.features)
    };
    let test_path = manifest_path(data, Split::Test);
    let test = if test_path.exists() { Some(load(Split::Test)?) } else { None };
    Dataset::prepare(load(Split::Train)?, load(Split::Dev)?, test)
}

/// Writes curves and checkpoints of a training run as epochs complete.
struct RunWriter<'a> {
    dir: &'a Path,
    data: &'a Dataset,
    pretrain: bool,
    se: Vec<EpochReport>,
    pre: Vec<EpochReport>,
    main: Vec<EpochReport>,
}

impl RunWriter<'_> {
    fn checkpoint(&self, model: Model<f32>) -> Checkpoint<f32> {
        let mut ck = Checkpoint::new(model);
        ck.input_norm = Some(self.data.input_norm.clone());
        ck.target_norm = Some(self.data.target_norm.clone());
        ck
    }

    fn on_epoch(&mut self, phase: &str, ev: EpochEvent<'_, f32>) -> Result<()> {
        match phase {
            "se" => {
                self.se.push(*ev.report);
                emit_se_curves(&self.se, &self.dir.join("se_metrics.csv"))?;
            }
            "sr" if self.pretrain => {
                self.pre.push(*ev.report);
                emit_curves(&self.pre, &self.dir.join("pretrain_metrics.csv"))?;
            }
            _ => {
                self.main.push(*ev.report);
                emit_curves(&self.main, &self.dir.join("metrics.csv"))?;
            }
        }
        if let Some(model) = ev.stage.to_model() {
            let mut ck = self.checkpoint(model);
            ck.rng = ev.rng;
            ck.trainer = *ev.state;
            if ev.new_best {
                ck.save(&self.dir.join("best.ckpt"))?;
            }
            ck.save(&self.dir.join("last.ckpt"))?;
        }
        Ok(())
    }
}

fn describe(cfg: &ExperimentConfig) -> String {
    let mut s = cfg.trainer.mode.to_string();
    if !cfg.network.batchnorm {
        s.push_str("+no-bn");
    }
    if cfg.trainer.pretrain == Pretrain::MatchedInit {
        s.push_str("+matched-init");
    }
    s
}

fn train(a: TrainArgs) -> Result<()> {
    let run_cfg = a.run.join(CONFIG_FILE);
    let mut cfg = if a.resume {
        require(&run_cfg)?;
        ExperimentConfig::load(&run_cfg)?
    } else {
        load_config(&a.data, a.config.as_deref())?
    };
    a.train.apply(&mut cfg);
    cfg.validate()?;
    let data = load_dataset(&a.data, &cfg)?;
    mkdir(&a.run)?;
    cfg.save(&run_cfg)?;
    let mut manifests = String::new();
    for split in Split::ALL {
        let p = manifest_path(&a.data, split);
        if p.exists() {
            writeln!(manifests, "{} {}", split.name(), p.display()).unwrap();
        }
    }
    write_atomic(&a.run.join("manifests.txt"), manifests.as_bytes())?;

    let mut writer = RunWriter {
        dir: &a.run,
        data: &data,
        pretrain: cfg.trainer.pretrain == Pretrain::MatchedInit,
        se: vec![],
        pre: vec![],
        main: vec![],
    };
    log::info!("training {} on {} frames", describe(&cfg), data.train.num_frames());
    let run = if a.resume {
        let (last_path, best_path) = (a.run.join("last.ckpt"), a.run.join("best.ckpt"));
        require(&last_path)?;
        require(&best_path)?;
        let last = Checkpoint::<f32>::load(&last_path)?;
        let best = Checkpoint::<f32>::load(&best_path)?;
        let best_stage = match best.model {
            Model::Joint(net) => Stage::Joint { net, lambda: cfg.trainer.lambda },
            Model::Single(s) => Stage::Single(s),
        };
        let metrics = a.run.join("metrics.csv");
        require(&metrics)?;
        writer.main = read_curves(&metrics)?;
        writer.main.truncate(last.trainer.epochs_done);
        let resume = Resume { state: last.trainer, rng: last.rng, best: best_stage };
        resume_system(&cfg.trainer, &cfg.network, &data, Some((resume, last.model)), &mut |p, ev| {
            writer.on_epoch(p, ev)
        })?
    } else {
        run_system(&cfg.trainer, &cfg.network, &data, &mut |p, ev| writer.on_epoch(p, ev))?
    };
    writer.checkpoint(run.model.clone()).save(&a.run.join("best.ckpt"))?;
    println!(
        "{}: dev FER {:.4}, held-out FER {:.4} over {} frames",
        describe(&cfg),
        run.dev.fer,
        run.eval.fer,
        run.eval.num_frames
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let split = parse_split(&a.split)?;
    let cfg_path = a.run.join(CONFIG_FILE);
    let ckpt_path = a.run.join("best.ckpt");
    require(&cfg_path)?;
    require(&ckpt_path)?;
    let cfg = ExperimentConfig::load(&cfg_path)?;
    let ckpt = Checkpoint::<f32>::load(&ckpt_path)?;
    let manifest = manifest_path(&a.data, split);
    require(&manifest)?;
    let mut corpus = Corpus::load(&manifest, &cfg.features)?;
    let (Some(input), Some(target)) = (&ckpt.input_norm, &ckpt.target_norm) else {
        return Err(Error::format(&ckpt_path, "checkpoint lacks normalization statistics"));
    };
    corpus.normalize(input, target);
    let summary = evaluate(&ckpt.model, &corpus, cfg.trainer.eval_chunk)?;
    let out = a.run.join(format!("eval_{}.csv", split.name()));
    summary.save(&out)?;
    println!(
        "{} on {}: FER {:.4}, NLL {:.4}{} over {} frames -> {}",
        describe(&cfg),
        split.name(),
        summary.fer,
        summary.nll,
        summary.mse.map(|m| format!(", MSE {m:.3}")).unwrap_or_default(),
        summary.num_frames,
        out.display()
    );
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = load_config(&a.data, a.config.as_deref())?;
    a.train.apply(&mut cfg);
    cfg.trainer.mode = SystemMode::Joint;
    cfg.validate()?;
    let data = load_dataset(&a.data, &cfg)?;
    mkdir(&a.out)?;
    cfg.save(&a.out.join(CONFIG_FILE))?;
    let mut curves: Vec<EpochReport> = Vec::new();
    let mut index = 0usize;
    let mut last_epoch = usize::MAX;
    let out = a.out.clone();
    let lambdas = a.lambdas.clone();
    let rows = sweep_lambda(&cfg.trainer, &cfg.network, &data, &a.lambdas, &mut |phase, ev| {
        if !matches!(phase, "joint" | "finetune") {
            return Ok(());
        }
        // Epoch numbering restarting marks the next λ's run.
        if ev.report.epoch <= last_epoch && !curves.is_empty() {
            curves.clear();
            index += 1;
        }
        last_epoch = ev.report.epoch;
        curves.push(*ev.report);
        let dir = out.join(format!("lambda_{}", lambdas[index]));
        mkdir(&dir)?;
        emit_curves(&curves, &dir.join("metrics.csv"))
    })?;
    let table = a.out.join("sweep.csv");
    write_sweep_table(&rows, &table)?;
    print!("{}", std::fs::read_to_string(&table).map_err(|e| Error::io(&table, e))?);
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let split = parse_split(&a.split)?;
    let mut rows = Vec::new();
    for dir in &a.runs {
        let cfg_path = dir.join(CONFIG_FILE);
        let summary_path = dir.join(format!("eval_{}.csv", split.name()));
        require(&cfg_path)?;
        require(&summary_path)?;
        let cfg = ExperimentConfig::load(&cfg_path)?;
        let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        rows.push((format!("{} [{name}]", describe(&cfg)), EvalSummary::load(&summary_path)?));
    }
    let table = compare_table(&rows);
    print!("{table}");
    write_atomic(&a.out, table.as_bytes())
}
