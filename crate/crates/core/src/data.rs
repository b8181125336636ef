//! Binary sequence datasets: JSONL files, synthetic generators, splits.
//!
//! File format: UTF-8, one object per line, `{"seq": [[0,1,..], ..], "id": ".."}`
//! with the `id` key optional.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Fraction of sequences assigned to the training split.
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub id: Option<String>,
    /// `T x I` matrix of 0/1 values.
    pub frames: Array2<f64>,
}

impl Sequence {
    pub fn new(frames: Array2<f64>) -> Self {
        Self { id: None, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceDataset {
    pub name: String,
    pub dim: usize,
    pub train: Vec<Sequence>,
    pub test: Vec<Sequence>,
    pub provenance: String,
}

#[derive(Serialize, Deserialize)]
struct Line {
    seq: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

fn parse_line(text: &str, path: &str, line: usize) -> Result<Sequence> {
    let parsed: Line = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: path.into(),
        line,
        message: e.to_string(),
    })?;
    let bad = |message: String| Error::Parse {
        path: path.into(),
        line,
        message,
    };
    if parsed.seq.is_empty() {
        return Err(bad("empty sequence".into()));
    }
    let dim = parsed.seq[0].len();
    let mut frames = Array2::zeros((parsed.seq.len(), dim));
    for (t, frame) in parsed.seq.iter().enumerate() {
        if frame.len() != dim {
            return Err(bad(format!(
                "frame {t} has dimension {} but frame 0 has dimension {dim}",
                frame.len()
            )));
        }
        for (i, &bit) in frame.iter().enumerate() {
            if bit > 1 {
                return Err(bad(format!("frame {t} holds {bit}, expected 0 or 1")));
            }
            frames[[t, i]] = bit as f64;
        }
    }
    Ok(Sequence { id: parsed.id, frames })
}

/// Reads every sequence of a JSONL file. Blank lines are skipped.
pub fn read_sequences(path: &Path) -> Result<Vec<Sequence>> {
    let name = path.display().to_string();
    let file = std::fs::File::open(path)?;
    let mut out: Vec<Sequence> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let seq = parse_line(&line, &name, n + 1)?;
        if let Some(first) = out.first() {
            if first.frames.ncols() != seq.frames.ncols() {
                return Err(Error::Parse {
                    path: name.into(),
                    line: n + 1,
                    message: format!(
                        "dimension {} differs from the file's dimension {}",
                        seq.frames.ncols(),
                        first.frames.ncols()
                    ),
                });
            }
        }
        out.push(seq);
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{name}: no sequences")));
    }
    Ok(out)
}

fn frame_bits(seq: &Sequence) -> Result<Vec<Vec<u8>>> {
    seq.frames
        .rows()
        .into_iter()
        .map(|r| {
            r.iter()
                .map(|&x| match x {
                    0.0 => Ok(0u8),
                    1.0 => Ok(1u8),
                    _ => Err(Error::Data(format!("non-binary value {x} in sequence"))),
                })
                .collect()
        })
        .collect()
}

pub fn write_sequences<W: Write>(mut out: W, seqs: &[Sequence]) -> Result<()> {
    for s in seqs {
        let line = Line {
            seq: frame_bits(s)?,
            id: s.id.clone(),
        };
        serde_json::to_writer(&mut out, &line).map_err(|e| Error::Data(e.to_string()))?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_sequences(path: &Path, seqs: &[Sequence]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_sequences(std::io::BufWriter::new(f), seqs)
}

impl SequenceDataset {
    pub fn new(name: impl Into<String>, train: Vec<Sequence>, test: Vec<Sequence>, provenance: impl Into<String>) -> Result<Self> {
        let first = train.first().or(test.first()).ok_or_else(|| Error::Data("no sequences".into()))?;
        let dim = first.frames.ncols();
        for s in train.iter().chain(&test) {
            if s.is_empty() {
                return Err(Error::Empty("sequence"));
            }
            if s.frames.ncols() != dim {
                return Err(Error::Data(format!(
                    "dimension {} differs from dataset dimension {dim}",
                    s.frames.ncols()
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            train,
            test,
            provenance: provenance.into(),
        })
    }

    /// Single JSONL file, all sequences in the training split.
    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let train = read_sequences(path)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::new(name, train, Vec::new(), path.display().to_string())
    }

    /// Separate training and test files.
    pub fn load_split(train: &Path, test: Option<&Path>) -> Result<Self> {
        let mut d = Self::load_jsonl(train)?;
        if let Some(t) = test {
            let test = read_sequences(t)?;
            d = Self::new(d.name, d.train, test, format!("{}; {}", train.display(), t.display()))?;
        }
        Ok(d)
    }

    pub fn train_views(&self) -> Vec<ArrayView2<'_, f64>> {
        self.train.iter().map(|s| s.frames.view()).collect()
    }

    pub fn test_views(&self) -> Vec<ArrayView2<'_, f64>> {
        self.test.iter().map(|s| s.frames.view()).collect()
    }

    pub fn train_matrices(&self) -> Vec<Array2<f64>> {
        self.train.iter().map(|s| s.frames.clone()).collect()
    }

    /// Every training frame stacked, for static models.
    pub fn train_frames(&self) -> Array2<f64> {
        crate::rnn::stack_frames(&self.train_views(), self.dim)
    }

    pub fn test_frames(&self) -> Array2<f64> {
        crate::rnn::stack_frames(&self.test_views(), self.dim)
    }

    pub fn summary(&self) -> String {
        let frames = |v: &[Sequence]| v.iter().map(Sequence::len).sum::<usize>();
        format!(
            "{}: dim {}, {} train sequences ({} frames), {} test sequences ({} frames)",
            self.name,
            self.dim,
            self.train.len(),
            frames(&self.train),
            self.test.len(),
            frames(&self.test)
        )
    }
}

/// Parameters of [`synth_cycle`].
#[derive(Debug, Clone, PartialEq)]
pub struct CycleSpec {
    pub n_patterns: usize,
    pub dim: usize,
    pub length: usize,
    pub n_sequences: usize,
    pub flip_prob: f64,
}

/// Sequences that cycle through `n_patterns` distinct random patterns from a
/// random starting phase, each bit flipped with `flip_prob`. The first 80%
/// of the sequences form the training split.
pub fn synth_cycle(spec: &CycleSpec, rng: &mut RngStream) -> Result<SequenceDataset> {
    let CycleSpec {
        n_patterns,
        dim,
        length,
        n_sequences,
        flip_prob,
    } = *spec;
    if dim == 0 || length == 0 || n_sequences == 0 || n_patterns == 0 {
        return Err(Error::Config("synthetic dataset sizes must be positive".into()));
    }
    if dim < 64 && n_patterns as u64 > 1u64 << dim {
        return Err(Error::Config(format!("{n_patterns} distinct patterns do not fit in {dim} bits")));
    }
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(Error::Config(format!("flip probability {flip_prob} outside [0, 0.5)")));
    }
    let mut patterns: Vec<Vec<f64>> = Vec::with_capacity(n_patterns);
    while patterns.len() < n_patterns {
        let p: Vec<f64> = (0..dim).map(|_| (rng.uniform() < 0.5) as u8 as f64).collect();
        if !patterns.contains(&p) {
            patterns.push(p);
        }
    }
    let seqs: Vec<Sequence> = (0..n_sequences)
        .map(|n| {
            let phase = (rng.uniform() * n_patterns as f64) as usize % n_patterns;
            let frames = Array2::from_shape_fn((length, dim), |(t, i)| {
                let bit = patterns[(t + phase) % n_patterns][i];
                if rng.uniform() < flip_prob {
                    1.0 - bit
                } else {
                    bit
                }
            });
            Sequence {
                id: Some(format!("cycle-{n}")),
                frames,
            }
        })
        .collect();
    let n_train = ((n_sequences as f64 * TRAIN_FRACTION).round() as usize).clamp(1, n_sequences);
    let mut train = seqs;
    let test = train.split_off(n_train);
    SequenceDataset::new(
        "synth-cycle",
        train,
        test,
        format!(
            "synth_cycle patterns={n_patterns} dim={dim} length={length} sequences={n_sequences} flip={flip_prob} seed={} stream={}",
            rng.seed(),
            rng.stream_id()
        ),
    )
}

/// Appends the XOR of every adjacent column pair `(2k, 2k+1)`.
pub fn parity_augment(ds: &SequenceDataset) -> Result<SequenceDataset> {
    let extra = ds.dim / 2;
    let aug = |s: &Sequence| {
        let f = &s.frames;
        let frames = Array2::from_shape_fn((f.nrows(), ds.dim + extra), |(t, i)| {
            if i < ds.dim {
                f[[t, i]]
            } else {
                let k = i - ds.dim;
                ((f[[t, 2 * k]] != 0.0) ^ (f[[t, 2 * k + 1]] != 0.0)) as u8 as f64
            }
        });
        Sequence { id: s.id.clone(), frames }
    };
    SequenceDataset::new(
        format!("{}-parity", ds.name),
        ds.train.iter().map(aug).collect(),
        ds.test.iter().map(aug).collect(),
        format!("{}; parity", ds.provenance),
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Per-dimension median of the given training frames.
    Median,
    Fixed(f64),
}

/// Per-dimension thresholds: values strictly greater than the threshold map
/// to 1.
pub fn binarization_thresholds(train: &[Array2<f64>], policy: ThresholdPolicy) -> Result<Vec<f64>> {
    let first = train.first().ok_or(Error::Empty("real-valued sequences"))?;
    let dim = first.ncols();
    for s in train {
        if s.ncols() != dim {
            return Err(Error::dim("channels", dim, s.ncols()));
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("real-valued sequence".into()));
        }
    }
    match policy {
        ThresholdPolicy::Fixed(x) => Ok(vec![x; dim]),
        ThresholdPolicy::Median => {
            let mut out = Vec::with_capacity(dim);
            for i in 0..dim {
                let mut col: Vec<f64> = train.iter().flat_map(|s| s.column(i).to_vec()).collect();
                if col.is_empty() {
                    return Err(Error::Empty("real-valued sequences"));
                }
                col.sort_by(f64::total_cmp);
                let n = col.len();
                out.push(if n % 2 == 1 { col[n / 2] } else { 0.5 * (col[n / 2 - 1] + col[n / 2]) });
            }
            Ok(out)
        }
    }
}

pub fn binarize_real_sequences(seqs: &[Array2<f64>], policy: ThresholdPolicy) -> Result<Vec<Array2<f64>>> {
    let thresholds = binarization_thresholds(seqs, policy)?;
    Ok(apply_thresholds(seqs, &thresholds))
}

pub fn apply_thresholds(seqs: &[Array2<f64>], thresholds: &[f64]) -> Vec<Array2<f64>> {
    seqs.iter()
        .map(|s| Array2::from_shape_fn(s.dim(), |(t, i)| (s[[t, i]] > thresholds[i]) as u8 as f64))
        .collect()
}
