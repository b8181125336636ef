//! Run orchestration behind the CLI: training runs with per-epoch logs and
//! checkpoints, evaluation, sampling and checkpoint inspection.
//!
//! A run directory holds exactly four files: [`CONFIG_FILE`] (the effective
//! configuration in canonical form), [`LOG_FILE`], [`CHECKPOINT_FILE`] and
//! [`SUMMARY_FILE`].

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::checkpoint::{Checkpoint, Model, TrainingState};
use crate::config::{ModelKind, RunConfig};
use crate::data::{read_sequences, save_sequences, Sequence, SequenceDataset};
use crate::dbn::DbnTrainer;
use crate::error::{check_dim, Error, Result};
use crate::log::TrainLog;
use crate::metrics::MetricAccumulator;
use crate::numerics::RngStream;
use crate::rnn_dbn::RnnDbnTrainer;
use crate::train::TrainConfig;

pub const CONFIG_FILE: &str = "config.txt";
pub const LOG_FILE: &str = "log.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "summary.txt";

/// Test-set (or any held-out) metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalMetrics {
    /// Mean per-unit cross-entropy.
    pub error: f64,
    /// Fraction of units on the right side of 0.5.
    pub correct_ratio: f64,
}

impl From<&MetricAccumulator> for EvalMetrics {
    fn from(acc: &MetricAccumulator) -> Self {
        Self {
            error: acc.error(),
            correct_ratio: acc.correct_ratio(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub kind: ModelKind,
    pub seed: u64,
    pub finished: bool,
    pub log_rows: usize,
    pub hidden_sizes: Vec<usize>,
    pub final_error: Option<f64>,
    pub test: Option<EvalMetrics>,
    pub wall_seconds: f64,
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind: {}", self.kind);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "finished: {}", self.finished);
        let _ = writeln!(s, "epochs logged: {}", self.log_rows);
        let _ = writeln!(s, "layers: {}", self.hidden_sizes.len());
        let _ = writeln!(s, "hidden sizes: {:?}", self.hidden_sizes);
        if let Some(e) = self.final_error {
            let _ = writeln!(s, "final training error: {e:.6}");
        }
        if let Some(t) = self.test {
            let _ = writeln!(s, "test error: {:.6}", t.error);
            let _ = writeln!(s, "test correct ratio: {:.6}", t.correct_ratio);
        }
        let _ = writeln!(s, "wall time: {:.2}s", self.wall_seconds);
        s
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Continue from the run directory's checkpoint.
    pub resume: bool,
    /// Stop after this many epochs in this invocation, as if interrupted.
    pub max_epochs: Option<usize>,
}

enum Trainer {
    Static(DbnTrainer),
    Recurrent(RnnDbnTrainer),
}

impl Trainer {
    fn new(kind: ModelKind, cfg: TrainConfig, seed: u64, ds: &SequenceDataset) -> Result<Self> {
        Ok(if kind.is_recurrent() {
            Trainer::Recurrent(RnnDbnTrainer::new(cfg, seed, ds.train_matrices())?)
        } else {
            Trainer::Static(DbnTrainer::new(cfg, seed, ds.train_frames())?)
        })
    }

    fn restore(cfg: TrainConfig, ck: Checkpoint, log: TrainLog, ds: &SequenceDataset) -> Result<Self> {
        let t = ck.training;
        let (n_visible, n_hidden) = match &ck.model {
            Model::Static(m) => (m.top().n_visible(), m.top().n_hidden()),
            Model::Recurrent(m) => (m.top().n_visible(), m.top().n_hidden()),
        };
        let mut ctl = cfg.controller(n_visible, n_hidden);
        ctl.epoch = t.epoch;
        ctl.generation_done_at = t.generation_done_at;
        ctl.quiet_streak = t.quiet_streak;
        ctl.stats = t.stats;
        Ok(match ck.model {
            Model::Static(m) => Trainer::Static(DbnTrainer::restore(
                cfg,
                ck.seed,
                ds.train_frames(),
                m,
                ctl,
                log,
                t.finished,
            )?),
            Model::Recurrent(m) => Trainer::Recurrent(RnnDbnTrainer::restore(
                cfg,
                ck.seed,
                ds.train_matrices(),
                m,
                ctl,
                log,
                t.finished,
            )?),
        })
    }

    fn step(&mut self) -> Result<bool> {
        match self {
            Trainer::Static(t) => t.step_epoch(),
            Trainer::Recurrent(t) => t.step_epoch(),
        }
    }

    fn finished(&self) -> bool {
        match self {
            Trainer::Static(t) => t.finished,
            Trainer::Recurrent(t) => t.finished,
        }
    }

    fn log(&self) -> &TrainLog {
        match self {
            Trainer::Static(t) => &t.log,
            Trainer::Recurrent(t) => &t.log,
        }
    }

    fn checkpoint(&self, kind: ModelKind) -> Checkpoint {
        let (seed, model, ctl, finished) = match self {
            Trainer::Static(t) => (t.seed, Model::Static(t.dbn.clone()), &t.ctl, t.finished),
            Trainer::Recurrent(t) => (t.seed, Model::Recurrent(t.model.clone()), &t.ctl, t.finished),
        };
        Checkpoint {
            kind,
            seed,
            model,
            training: TrainingState {
                epoch: ctl.epoch,
                generation_done_at: ctl.generation_done_at,
                quiet_streak: ctl.quiet_streak,
                finished,
                log_rows: self.log().rows.len(),
                stats: ctl.stats.clone(),
            },
        }
    }
}

/// Loads the configured dataset; the training file is mandatory.
pub fn load_dataset(cfg: &RunConfig) -> Result<SequenceDataset> {
    let train = cfg
        .train_path
        .as_deref()
        .ok_or_else(|| Error::Config("data.train is required".into()))?;
    SequenceDataset::load_split(train, cfg.test_path.as_deref())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Trains per `cfg` into `cfg.output_dir`, writing the log and checkpoint
/// after every epoch.
pub fn train_run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunSummary> {
    cfg.validate()?;
    let start = Instant::now();
    let ds = load_dataset(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let tcfg = cfg.effective_train();
    let ck_path = dir.join(CHECKPOINT_FILE);
    let log_path = dir.join(LOG_FILE);
    let mut trainer = if opts.resume {
        let ck = Checkpoint::load(&ck_path)?;
        if ck.kind != cfg.kind || ck.seed != cfg.seed {
            return Err(Error::Config(format!(
                "checkpoint is {} with seed {}, config asks for {} with seed {}",
                ck.kind, ck.seed, cfg.kind, cfg.seed
            )));
        }
        let mut log = TrainLog::read_csv(&log_path)?;
        if log.rows.len() < ck.training.log_rows {
            return Err(Error::Data(format!(
                "{} has {} rows, checkpoint expects {}",
                log_path.display(),
                log.rows.len(),
                ck.training.log_rows
            )));
        }
        log.rows.truncate(ck.training.log_rows);
        Trainer::restore(tcfg, ck, log, &ds)?
    } else {
        Trainer::new(cfg.kind, tcfg, cfg.seed, &ds)?
    };
    write_atomic(&dir.join(CONFIG_FILE), cfg.to_text().as_bytes())?;
    let mut steps = 0usize;
    while !trainer.finished() && opts.max_epochs.is_none_or(|m| steps < m) {
        trainer.step()?;
        steps += 1;
        write_atomic(&log_path, trainer.log().to_csv_string().as_bytes())?;
        trainer.checkpoint(cfg.kind).save(&ck_path)?;
    }
    if steps == 0 && !ck_path.exists() {
        trainer.checkpoint(cfg.kind).save(&ck_path)?;
        write_atomic(&log_path, trainer.log().to_csv_string().as_bytes())?;
    }
    let ck = trainer.checkpoint(cfg.kind);
    let test = if trainer.finished() && !ds.test.is_empty() {
        Some(evaluate(&ck.model, &ds.test_views())?)
    } else {
        None
    };
    let summary = RunSummary {
        kind: cfg.kind,
        seed: cfg.seed,
        finished: trainer.finished(),
        log_rows: trainer.log().rows.len(),
        hidden_sizes: ck.model.hidden_sizes(),
        final_error: trainer.log().last().map(|r| r.error),
        test,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    if summary.finished {
        write_atomic(&dir.join(SUMMARY_FILE), summary.to_text().as_bytes())?;
    }
    Ok(summary)
}

/// Static models: reconstruction of every frame through the whole stack.
/// Recurrent models: prediction of frames `2..T` from their prefixes.
pub fn evaluate(model: &Model, seqs: &[ArrayView2<f64>]) -> Result<EvalMetrics> {
    for s in seqs {
        check_dim("visible", model.n_visible(), s.ncols())?;
    }
    let acc = match model {
        Model::Static(m) => {
            let mut acc = MetricAccumulator::default();
            for s in seqs {
                let r = m.reconstruct(*s)?;
                acc.add(r.view(), *s);
            }
            acc
        }
        Model::Recurrent(m) => m.prediction_metrics(seqs)?,
    };
    if acc.units() == 0 {
        return Err(Error::Empty("evaluation data"));
    }
    Ok(EvalMetrics::from(&acc))
}

pub fn eval_checkpoint(checkpoint: &Path, dataset: &Path) -> Result<EvalMetrics> {
    let ck = Checkpoint::load(checkpoint)?;
    let seqs = read_sequences(dataset)?;
    let views: Vec<_> = seqs.iter().map(|s| s.frames.view()).collect();
    evaluate(&ck.model, &views)
}

/// Autoregressive sample of `length` frames from a recurrent checkpoint.
pub fn sample(ck: &Checkpoint, length: usize, seed: u64) -> Result<Array2<f64>> {
    match &ck.model {
        Model::Recurrent(m) => m.sample(length, &mut RngStream::new(seed)),
        Model::Static(_) => Err(Error::UnsupportedKind(ck.kind.to_string())),
    }
}

/// Writes one sampled sequence as a single JSONL line.
pub fn sample_to_file(checkpoint: &Path, length: usize, seed: u64, out: &Path) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let frames = sample(&ck, length, seed)?;
    save_sequences(out, &[Sequence { id: None, frames }])
}

/// Human-readable structure of a checkpoint.
pub fn describe(ck: &Checkpoint) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "kind: {}", ck.kind);
    let _ = writeln!(s, "seed: {}", ck.seed);
    let _ = writeln!(s, "visible units: {}", ck.model.n_visible());
    let _ = writeln!(s, "layers: {}", ck.model.n_layers());
    match &ck.model {
        Model::Static(m) => {
            for (l, r) in m.layers.iter().enumerate() {
                let _ = writeln!(s, "  layer {}: {} -> {} hidden", l + 1, r.n_visible(), r.n_hidden());
            }
        }
        Model::Recurrent(m) => {
            for (l, r) in m.layers.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "  layer {}: {} -> {} hidden, state {}",
                    l + 1,
                    r.n_visible(),
                    r.n_hidden(),
                    r.state_dim()
                );
            }
        }
    }
    let t = &ck.training;
    let _ = writeln!(
        s,
        "training: epoch {} of layer {}, {}, {} log rows",
        t.epoch,
        ck.model.n_layers(),
        if t.finished { "finished" } else { "in progress" },
        t.log_rows
    );
    s
}

/// Writes `train.jsonl` and `test.jsonl` into `dir`.
pub fn write_dataset(ds: &SequenceDataset, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let train = dir.join("train.jsonl");
    let test = dir.join("test.jsonl");
    save_sequences(&train, &ds.train)?;
    save_sequences(&test, &ds.test)?;
    Ok((train, test))
}
