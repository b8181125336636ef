//! `adrbm`: train, evaluate, sample and inspect adaptive RBM models.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::path::PathBuf;
use std::process::ExitCode;

use adaptive_rbm::checkpoint::Checkpoint;
use adaptive_rbm::config::RunConfig;
use adaptive_rbm::data::{parity_augment, synth_cycle, CycleSpec};
use adaptive_rbm::harness::{self, RunOptions};
use adaptive_rbm::numerics::RngStream;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adrbm", version, about = "Structure-adaptive RBMs for binary sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides train.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides output.dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Print error and correct ratio of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Generate a sequence from a recurrent checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 32)]
        length: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSONL file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the structure of a checkpoint.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write a synthetic cyclic dataset as train.jsonl / test.jsonl.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        patterns: usize,
        #[arg(long, default_value_t = 8)]
        dim: usize,
        #[arg(long, default_value_t = 32)]
        length: usize,
        #[arg(long, default_value_t = 50)]
        sequences: usize,
        #[arg(long, default_value_t = 0.05)]
        flip: f64,
        /// Append XOR features of adjacent column pairs.
        #[arg(long)]
        parity: bool,
    },
}

fn run(cmd: Command) -> adaptive_rbm::Result<()> {
    match cmd {
        Command::Train {
            config,
            seed,
            out,
            resume,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let summary = harness::train_run(
                &cfg,
                &RunOptions {
                    resume,
                    max_epochs: None,
                },
            )?;
            print!("{}", summary.to_text());
            println!("run directory: {}", cfg.output_dir.display());
        }
        Command::Eval { checkpoint, dataset } => {
            let m = harness::eval_checkpoint(&checkpoint, &dataset)?;
            println!("error = {}", m.error);
            println!("correct_ratio = {}", m.correct_ratio);
        }
        Command::Sample {
            checkpoint,
            length,
            seed,
            out,
        } => {
            harness::sample_to_file(&checkpoint, length, seed, &out)?;
            println!("wrote {length} frames to {}", out.display());
        }
        Command::Inspect { checkpoint } => {
            print!("{}", harness::describe(&Checkpoint::load(&checkpoint)?));
        }
        Command::Synth {
            out,
            seed,
            patterns,
            dim,
            length,
            sequences,
            flip,
            parity,
        } => {
            let spec = CycleSpec {
                n_patterns: patterns,
                dim,
                length,
                n_sequences: sequences,
                flip_prob: flip,
            };
            let mut ds = synth_cycle(&spec, &mut RngStream::new(seed))?;
            if parity {
                ds = parity_augment(&ds)?;
            }
            let (train, test) = harness::write_dataset(&ds, &out)?;
            println!("{}", ds.summary());
            println!("wrote {} and {}", train.display(), test.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("adrbm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
