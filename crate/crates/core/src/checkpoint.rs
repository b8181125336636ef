//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "ADRBMCK\0"
//! version  u32
//! header   u32 length + UTF-8 `key=value` lines
//! entries  u32 count, then per entry:
//!          u32 name length, name, u64 rows, u64 cols, rows*cols f64 (row-major)
//! ```
//!
//! The header fixes the model kind, seed, RNG algorithm, layer shapes and the
//! training position; the entries hold every parameter matrix plus the
//! gradient statistics of the layer in training. Vectors are stored as
//! `1 x n` matrices.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::adapt::GradientStats;
use crate::config::ModelKind;
use crate::dbn::{Dbn, LayerTotals};
use crate::error::{Error, Result};
use crate::rbm::Rbm;
use crate::rnn::RnnRbm;
use crate::rnn_dbn::RnnDbn;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ADRBMCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;
/// Identifier of the generator behind [`crate::numerics::RngStream`].
pub const RNG_ALGORITHM: &str = "chacha20-splitmix64";

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Static(Dbn),
    Recurrent(RnnDbn),
}

impl Model {
    pub fn n_layers(&self) -> usize {
        match self {
            Model::Static(m) => m.n_layers(),
            Model::Recurrent(m) => m.n_layers(),
        }
    }

    pub fn n_visible(&self) -> usize {
        match self {
            Model::Static(m) => m.n_visible(),
            Model::Recurrent(m) => m.n_visible(),
        }
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        match self {
            Model::Static(m) => m.layers.iter().map(Rbm::n_hidden).collect(),
            Model::Recurrent(m) => m.layers.iter().map(RnnRbm::n_hidden).collect(),
        }
    }

    fn totals(&self) -> &[LayerTotals] {
        match self {
            Model::Static(m) => &m.totals,
            Model::Recurrent(m) => &m.totals,
        }
    }
}

/// Position of an interrupted or finished training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    /// Completed epochs of the current layer.
    pub epoch: usize,
    pub generation_done_at: Option<usize>,
    pub quiet_streak: usize,
    pub finished: bool,
    /// Rows of the training log covered by this checkpoint.
    pub log_rows: usize,
    pub stats: GradientStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub seed: u64,
    pub model: Model,
    pub training: TrainingState,
}

fn put_matrix(out: &mut Vec<u8>, name: &str, m: &Array2<f64>) {
    out.extend((name.len() as u32).to_le_bytes());
    out.extend(name.as_bytes());
    out.extend((m.nrows() as u64).to_le_bytes());
    out.extend((m.ncols() as u64).to_le_bytes());
    for x in m.iter() {
        out.extend(x.to_le_bytes());
    }
}

fn row(v: &Array1<f64>) -> Array2<f64> {
    v.clone().insert_axis(ndarray::Axis(0))
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn inconsistent(msg: impl Into<String>) -> Error {
    Error::CheckpointInconsistent(msg.into())
}

impl Checkpoint {
    fn entries(&self) -> Vec<(String, Array2<f64>)> {
        let mut e = Vec::new();
        let statics: Vec<&Rbm> = match &self.model {
            Model::Static(m) => m.layers.iter().collect(),
            Model::Recurrent(m) => m.layers.iter().map(|l| &l.rbm).collect(),
        };
        for (l, rbm) in statics.iter().enumerate() {
            e.push((format!("layer{l}.b"), row(&rbm.b)));
            e.push((format!("layer{l}.c"), row(&rbm.c)));
            e.push((format!("layer{l}.w"), rbm.w.clone()));
            if let Model::Recurrent(m) = &self.model {
                let r = &m.layers[l];
                e.push((format!("layer{l}.u_bias"), row(&r.u_bias)));
                e.push((format!("layer{l}.w_uv"), r.w_uv.clone()));
                e.push((format!("layer{l}.w_uh"), r.w_uh.clone()));
                e.push((format!("layer{l}.w_vu"), r.w_vu.clone()));
                e.push((format!("layer{l}.w_uu"), r.w_uu.clone()));
                e.push((format!("layer{l}.u0"), row(&r.u0)));
            }
        }
        let totals = self.model.totals();
        let mut t = Array2::zeros((totals.len(), 2));
        for (i, x) in totals.iter().enumerate() {
            t[[i, 0]] = x.wd;
            t[[i, 1]] = x.energy;
        }
        e.push(("totals".into(), t));
        let s = &self.training.stats;
        e.push(("stats.c_mean".into(), row(&s.c_mean)));
        e.push(("stats.c_sq".into(), row(&s.c_sq)));
        e.push(("stats.w_mean".into(), s.w_mean.clone()));
        e.push(("stats.w_sq".into(), s.w_sq.clone()));
        let counts = Array1::from_iter(s.counts.iter().map(|&c| c as f64));
        e.push(("stats.counts".into(), row(&counts)));
        e
    }

    fn header(&self) -> String {
        let t = &self.training;
        let mut lines = vec![
            format!("kind={}", self.kind),
            format!("seed={}", self.seed),
            format!("rng={RNG_ALGORITHM}"),
            format!("n_visible={}", self.model.n_visible()),
            format!("n_layers={}", self.model.n_layers()),
            format!("hidden={}", join(&self.model.hidden_sizes())),
        ];
        if let Model::Recurrent(m) = &self.model {
            let k: Vec<usize> = m.layers.iter().map(RnnRbm::state_dim).collect();
            lines.push(format!("state_dim={}", join(&k)));
        }
        lines.extend([
            format!("epoch={}", t.epoch),
            format!(
                "generation_done_at={}",
                t.generation_done_at.map_or("none".to_string(), |g| g.to_string())
            ),
            format!("quiet_streak={}", t.quiet_streak),
            format!("finished={}", t.finished),
            format!("log_rows={}", t.log_rows),
            format!("stats_decay={}", t.stats.decay),
        ]);
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        let header = self.header();
        out.extend((header.len() as u32).to_le_bytes());
        out.extend(header.as_bytes());
        let entries = self.entries();
        out.extend((entries.len() as u32).to_le_bytes());
        for (name, m) in &entries {
            put_matrix(&mut out, name, m);
        }
        out
    }

    /// Writes through a temporary file and a rename, so an interrupted save
    /// leaves the previous checkpoint intact.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        let version = if bytes.len() >= 12 {
            u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"))
        } else {
            0
        };
        if magic != CHECKPOINT_MAGIC {
            // A file that is not a checkpoint reports the version it lacks.
            return Err(Error::CheckpointVersion {
                expected: CHECKPOINT_VERSION,
                found: 0,
            });
        }
        r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let hlen = r.u32("header length")? as usize;
        let header = std::str::from_utf8(r.take(hlen, "header")?)
            .map_err(|_| inconsistent("header is not UTF-8"))?;
        let header = Header::parse(header)?;
        let count = r.u32("entry count")? as usize;
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let nlen = r.u32("entry name length")? as usize;
            let name = std::str::from_utf8(r.take(nlen, "entry name")?)
                .map_err(|_| inconsistent("entry name is not UTF-8"))?
                .to_string();
            let rows = r.u64("entry rows")? as usize;
            let cols = r.u64("entry cols")? as usize;
            let len = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| inconsistent(format!("{name}: shape {rows}x{cols} overflows")))?;
            let data = r.take(len, &name)?;
            let values: Vec<f64> = data
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let m = Array2::from_shape_vec((rows, cols), values).expect("length checked");
            if entries.insert(name.clone(), m).is_some() {
                return Err(inconsistent(format!("entry {name} repeated")));
            }
        }
        if r.pos != bytes.len() {
            return Err(inconsistent(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Entries(entries).build(header)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::CheckpointTruncated(format!(
                "{what} needs {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

struct Header {
    kind: ModelKind,
    seed: u64,
    n_visible: usize,
    hidden: Vec<usize>,
    state_dim: Vec<usize>,
    epoch: usize,
    generation_done_at: Option<usize>,
    quiet_streak: usize,
    finished: bool,
    log_rows: usize,
    stats_decay: f64,
}

impl Header {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| inconsistent(format!("bad header line `{line}`")))?;
            map.insert(k, v);
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| inconsistent(format!("header lacks `{k}`")));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| inconsistent(format!("header `{k}` has bad value `{v}`")))
        }
        let list = |k: &str| -> Result<Vec<usize>> {
            get(k)?.split(',').map(|x| num(k, x)).collect()
        };
        let rng = get("rng")?;
        if rng != RNG_ALGORITHM {
            return Err(inconsistent(format!("generator `{rng}` is not {RNG_ALGORITHM}")));
        }
        let kind: ModelKind = get("kind")?
            .parse()
            .map_err(|_| inconsistent("unknown model kind in header"))?;
        let n_layers: usize = num("n_layers", get("n_layers")?)?;
        let hidden = list("hidden")?;
        if n_layers == 0 || hidden.len() != n_layers {
            return Err(inconsistent(format!("{n_layers} layers but {} hidden sizes", hidden.len())));
        }
        let state_dim = if kind.is_recurrent() { list("state_dim")? } else { Vec::new() };
        if kind.is_recurrent() && state_dim.len() != n_layers {
            return Err(inconsistent("state_dim list does not match layer count"));
        }
        let gen = get("generation_done_at")?;
        Ok(Header {
            kind,
            seed: num("seed", get("seed")?)?,
            n_visible: num("n_visible", get("n_visible")?)?,
            hidden,
            state_dim,
            epoch: num("epoch", get("epoch")?)?,
            generation_done_at: if gen == "none" { None } else { Some(num("generation_done_at", gen)?) },
            quiet_streak: num("quiet_streak", get("quiet_streak")?)?,
            finished: num("finished", get("finished")?)?,
            log_rows: num("log_rows", get("log_rows")?)?,
            stats_decay: num("stats_decay", get("stats_decay")?)?,
        })
    }
}

struct Entries(BTreeMap<String, Array2<f64>>);

impl Entries {
    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let m = self
            .0
            .remove(name)
            .ok_or_else(|| inconsistent(format!("missing entry {name}")))?;
        if m.dim() != (rows, cols) {
            return Err(inconsistent(format!(
                "{name} is {}x{}, header implies {rows}x{cols}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(m)
    }

    fn vector(&mut self, name: &str, len: usize) -> Result<Array1<f64>> {
        Ok(self.matrix(name, 1, len)?.remove_axis(ndarray::Axis(0)))
    }

    fn build(mut self, h: Header) -> Result<Checkpoint> {
        let mut statics = Vec::new();
        let mut below = h.n_visible;
        for (l, &nj) in h.hidden.iter().enumerate() {
            let rbm = Rbm::from_parts(
                self.vector(&format!("layer{l}.b"), below)?,
                self.vector(&format!("layer{l}.c"), nj)?,
                self.matrix(&format!("layer{l}.w"), below, nj)?,
            )
            .map_err(|e| inconsistent(e.to_string()))?;
            statics.push(rbm);
            below = nj;
        }
        let n_layers = statics.len();
        let totals_m = self.matrix("totals", self.0.get("totals").map_or(0, |t| t.nrows()), 2)?;
        if totals_m.nrows() > n_layers {
            return Err(inconsistent("more layer totals than layers"));
        }
        let totals: Vec<LayerTotals> = totals_m
            .rows()
            .into_iter()
            .map(|r| LayerTotals { wd: r[0], energy: r[1] })
            .collect();
        let model = if h.kind.is_recurrent() {
            let mut layers = Vec::new();
            for (l, rbm) in statics.into_iter().enumerate() {
                let (ni, nj, k) = (rbm.n_visible(), rbm.n_hidden(), h.state_dim[l]);
                layers.push(RnnRbm {
                    rbm,
                    u_bias: self.vector(&format!("layer{l}.u_bias"), k)?,
                    w_uv: self.matrix(&format!("layer{l}.w_uv"), ni, k)?,
                    w_uh: self.matrix(&format!("layer{l}.w_uh"), nj, k)?,
                    w_vu: self.matrix(&format!("layer{l}.w_vu"), k, ni)?,
                    w_uu: self.matrix(&format!("layer{l}.w_uu"), k, k)?,
                    u0: self.vector(&format!("layer{l}.u0"), k)?,
                });
            }
            let mut m = RnnDbn::from_layers(layers).map_err(|e| inconsistent(e.to_string()))?;
            m.totals = totals;
            Model::Recurrent(m)
        } else {
            let mut m = Dbn::from_layers(statics).map_err(|e| inconsistent(e.to_string()))?;
            m.totals = totals;
            Model::Static(m)
        };
        let top_v = if n_layers == 1 { h.n_visible } else { h.hidden[n_layers - 2] };
        let top_h = h.hidden[n_layers - 1];
        let counts = self.vector("stats.counts", top_h)?;
        let counts = counts
            .iter()
            .map(|&c| {
                if c >= 0.0 && c.fract() == 0.0 {
                    Ok(c as u64)
                } else {
                    Err(inconsistent(format!("bad update count {c}")))
                }
            })
            .collect::<Result<Vec<u64>>>()?;
        let stats = GradientStats {
            decay: h.stats_decay,
            c_mean: self.vector("stats.c_mean", top_h)?,
            c_sq: self.vector("stats.c_sq", top_h)?,
            w_mean: self.matrix("stats.w_mean", top_v, top_h)?,
            w_sq: self.matrix("stats.w_sq", top_v, top_h)?,
            counts,
        };
        if let Some(extra) = self.0.keys().next() {
            return Err(inconsistent(format!("unexpected entry {extra}")));
        }
        Ok(Checkpoint {
            kind: h.kind,
            seed: h.seed,
            model,
            training: TrainingState {
                epoch: h.epoch,
                generation_done_at: h.generation_done_at,
                quiet_streak: h.quiet_streak,
                finished: h.finished,
                log_rows: h.log_rows,
                stats,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn stats(rng: &mut RngStream, ni: usize, nj: usize) -> GradientStats {
        let mut s = GradientStats::new(ni, nj, 0.9);
        s.c_mean = rng.normal_vec(nj, 1.0);
        s.w_sq = rng.normal_matrix(ni, nj, 1.0);
        s.counts = (0..nj as u64).collect();
        s
    }

    fn recurrent() -> Checkpoint {
        let mut rng = RngStream::new(3);
        let mut m = RnnDbn::new(RnnRbm::new(5, 3, 2, &mut rng));
        m.totals.push(LayerTotals { wd: 0.5, energy: -1.25 });
        m.layers.push(crate::rnn_dbn::inherited_rnn_layer(&m.layers[0], &mut rng));
        Checkpoint {
            kind: ModelKind::RnnDbn,
            seed: 17,
            model: Model::Recurrent(m),
            training: TrainingState {
                epoch: 4,
                generation_done_at: Some(2),
                quiet_streak: 1,
                finished: false,
                log_rows: 14,
                stats: stats(&mut rng, 3, 3),
            },
        }
    }

    fn static_ck() -> Checkpoint {
        let mut rng = RngStream::new(4);
        Checkpoint {
            kind: ModelKind::Rbm,
            seed: u64::MAX,
            model: Model::Static(Dbn::new(Rbm::new(4, 6, &mut rng))),
            training: TrainingState {
                epoch: 0,
                generation_done_at: None,
                quiet_streak: 0,
                finished: true,
                log_rows: 0,
                stats: stats(&mut rng, 4, 6),
            },
        }
    }

    #[test]
    fn round_trip_is_exact_and_idempotent() {
        for ck in [recurrent(), static_ck()] {
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn save_load_save_files_are_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.ck"), dir.path().join("b.ck"));
        recurrent().save(&a).unwrap();
        Checkpoint::load(&a).unwrap().save(&b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 2);
    }

    #[test]
    fn corrupted_magic_is_a_version_error() {
        let mut bytes = recurrent().to_bytes();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::CheckpointVersion { .. })));
    }

    #[test]
    fn future_version_is_rejected() {
        let mut bytes = recurrent().to_bytes();
        bytes[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(Error::CheckpointVersion { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn every_truncation_is_detected() {
        let bytes = static_ck().to_bytes();
        for cut in [4, 10, 20, bytes.len() / 2, bytes.len() - 1] {
            let e = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
            let ok = matches!(e, Error::CheckpointTruncated(_))
                || (cut < 12 && matches!(e, Error::CheckpointVersion { .. }));
            assert!(ok, "cut {cut}: {e}");
        }
    }

    #[test]
    fn dimension_disagreement_is_inconsistent() {
        let ck = static_ck();
        let bytes = ck.to_bytes();
        let pos = bytes.windows(8).position(|w| w == b"hidden=6").unwrap();
        let mut bad = bytes.clone();
        bad[pos + 7] = b'5';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::CheckpointInconsistent(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(Checkpoint::from_bytes(&extra), Err(Error::CheckpointInconsistent(_))));
    }
}
