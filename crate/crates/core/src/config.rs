//! Run configuration: a line-based `key = value` file with dotted section
//! prefixes. Keys are case-insensitive, `#` starts a comment, and unknown or
//! repeated keys are rejected.
//!
//! ```text
//! model.kind = rnn-rbm
//! model.hidden = 4
//! train.epochs = 60
//! adapt.theta_G = 0.001
//! data.train = train.jsonl
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::train::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Rbm,
    Dbn,
    RnnRbm,
    RnnDbn,
}

impl ModelKind {
    pub fn is_recurrent(self) -> bool {
        matches!(self, ModelKind::RnnRbm | ModelKind::RnnDbn)
    }

    /// Single-layer kinds never grow a second layer.
    pub fn is_deep(self) -> bool {
        matches!(self, ModelKind::Dbn | ModelKind::RnnDbn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Rbm => "rbm",
            ModelKind::Dbn => "dbn",
            ModelKind::RnnRbm => "rnn-rbm",
            ModelKind::RnnDbn => "rnn-dbn",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rbm" => Ok(ModelKind::Rbm),
            "dbn" => Ok(ModelKind::Dbn),
            "rnn-rbm" => Ok(ModelKind::RnnRbm),
            "rnn-dbn" => Ok(ModelKind::RnnDbn),
            other => Err(Error::Config(format!(
                "unknown model kind `{other}` (expected rbm, dbn, rnn-rbm or rnn-dbn)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub kind: ModelKind,
    pub train: TrainConfig,
    pub seed: u64,
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::RnnRbm,
            train: TrainConfig::default(),
            seed: 0,
            train_path: None,
            test_path: None,
            output_dir: PathBuf::from("run"),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{raw}`")))
}

fn resolve(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Parses config text; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = RunConfig {
            output_dir: base.join("run"),
            ..RunConfig::default()
        };
        let mut seen = std::collections::HashSet::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, raw) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            let key = key.trim().to_ascii_lowercase();
            let raw = raw.trim();
            if !seen.insert(key.clone()) {
                return Err(Error::Config(format!("line {}: `{key}` given twice", n + 1)));
            }
            cfg.set(&key, raw, base)
                .map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                    other => other,
                })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    fn set(&mut self, key: &str, raw: &str, base: &Path) -> Result<()> {
        let t = &mut self.train;
        match key {
            "model.kind" => self.kind = raw.parse()?,
            "model.adaptive" => t.adaptive = value(key, raw)?,
            "model.hidden" => t.initial_hidden = value(key, raw)?,
            "model.state_dim" => t.state_dim = Some(value(key, raw)?),
            "train.epochs" => t.epochs = value(key, raw)?,
            "train.seed" => self.seed = value(key, raw)?,
            "train.k" => t.cd.k = value(key, raw)?,
            "train.learning_rate" => t.cd.learning_rate = value(key, raw)?,
            "train.batch_size" => t.cd.batch_size = value(key, raw)?,
            "train.clip_norm" => t.clip_norm = value(key, raw)?,
            "adapt.alpha_c" => t.adapt.alpha_c = value(key, raw)?,
            "adapt.alpha_w" => t.adapt.alpha_w = value(key, raw)?,
            "adapt.theta_g" => t.adapt.theta_g = value(key, raw)?,
            "adapt.theta_a" => t.adapt.theta_a = value(key, raw)?,
            "adapt.generation_phase_epochs" => t.adapt.generation_phase_epochs = value(key, raw)?,
            "adapt.min_hidden" => t.adapt.min_hidden = value(key, raw)?,
            "adapt.max_hidden" => t.adapt.max_hidden = value(key, raw)?,
            "adapt.split_noise_sd" => t.adapt.split_noise_sd = value(key, raw)?,
            "adapt.stats_decay" => t.adapt.stats_decay = value(key, raw)?,
            "forget.epsilon1" => t.forgetting.epsilon1 = value(key, raw)?,
            "forget.epsilon2" => t.forgetting.epsilon2 = value(key, raw)?,
            "forget.epsilon3" => t.forgetting.epsilon3 = value(key, raw)?,
            "forget.theta" => t.forgetting.theta_selective = value(key, raw)?,
            "forget.forgetting_epochs" => t.forgetting.forgetting_epochs = value(key, raw)?,
            "forget.selective_epochs" => t.forgetting.selective_epochs = value(key, raw)?,
            "layer.alpha_wd" => t.layers.alpha_wd = value(key, raw)?,
            "layer.alpha_e" => t.layers.alpha_e = value(key, raw)?,
            "layer.theta_l1" => t.layers.theta_l1 = value(key, raw)?,
            "layer.theta_l2" => t.layers.theta_l2 = value(key, raw)?,
            "layer.max_layers" => t.layers.max_layers = value(key, raw)?,
            "data.train" => self.train_path = Some(resolve(base, raw)),
            "data.test" => self.test_path = Some(resolve(base, raw)),
            "output.dir" => self.output_dir = resolve(base, raw),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.train.layers.max_layers == 0 {
            return Err(Error::Config("layer.max_layers must be at least 1".into()));
        }
        Ok(())
    }

    /// The training configuration actually used, with single-layer kinds
    /// capped at one layer.
    pub fn effective_train(&self) -> TrainConfig {
        let mut t = self.train.clone();
        if !self.kind.is_deep() {
            t.layers.max_layers = 1;
        }
        t
    }

    /// Canonical text listing every key; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let mut lines = vec![
            format!("model.kind = {}", self.kind),
            format!("model.adaptive = {}", t.adaptive),
            format!("model.hidden = {}", t.initial_hidden),
        ];
        if let Some(k) = t.state_dim {
            lines.push(format!("model.state_dim = {k}"));
        }
        lines.extend([
            format!("train.epochs = {}", t.epochs),
            format!("train.seed = {}", self.seed),
            format!("train.k = {}", t.cd.k),
            format!("train.learning_rate = {}", t.cd.learning_rate),
            format!("train.batch_size = {}", t.cd.batch_size),
            format!("train.clip_norm = {}", t.clip_norm),
            format!("adapt.alpha_c = {}", t.adapt.alpha_c),
            format!("adapt.alpha_w = {}", t.adapt.alpha_w),
            format!("adapt.theta_g = {}", t.adapt.theta_g),
            format!("adapt.theta_a = {}", t.adapt.theta_a),
            format!("adapt.generation_phase_epochs = {}", t.adapt.generation_phase_epochs),
            format!("adapt.min_hidden = {}", t.adapt.min_hidden),
            format!("adapt.max_hidden = {}", t.adapt.max_hidden),
            format!("adapt.split_noise_sd = {}", t.adapt.split_noise_sd),
            format!("adapt.stats_decay = {}", t.adapt.stats_decay),
            format!("forget.epsilon1 = {}", t.forgetting.epsilon1),
            format!("forget.epsilon2 = {}", t.forgetting.epsilon2),
            format!("forget.epsilon3 = {}", t.forgetting.epsilon3),
            format!("forget.theta = {}", t.forgetting.theta_selective),
            format!("forget.forgetting_epochs = {}", t.forgetting.forgetting_epochs),
            format!("forget.selective_epochs = {}", t.forgetting.selective_epochs),
            format!("layer.alpha_wd = {}", t.layers.alpha_wd),
            format!("layer.alpha_e = {}", t.layers.alpha_e),
            format!("layer.theta_l1 = {}", t.layers.theta_l1),
            format!("layer.theta_l2 = {}", t.layers.theta_l2),
            format!("layer.max_layers = {}", t.layers.max_layers),
        ]);
        if let Some(p) = &self.train_path {
            lines.push(format!("data.train = {}", p.display()));
        }
        if let Some(p) = &self.test_path {
            lines.push(format!("data.test = {}", p.display()));
        }
        lines.push(format!("output.dir = {}", self.output_dir.display()));
        let mut s = lines.join("\n");
        s.push('\n');
        s
    }
}
