//! Stacked RNN-RBMs. Each layer is trained on the deterministic hidden
//! sequences of the layer below; layers are added by the same growth rule as
//! [`crate::dbn`].

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::adapt::{StructureController, StructureEvent};
use crate::dbn::{inherited_layer, layer_sums, layer_totals, should_generate_layer, LayerGenConfig, LayerTotals, INIT_STREAM};
use crate::error::{check_dim, Error, Result};
use crate::log::{LogRow, TrainLog};
use crate::metrics::MetricAccumulator;
use crate::numerics::{sample_bernoulli, sigmoid, RngStream};
use crate::rnn::RnnRbm;
use crate::train::{recurrent_epoch, recurrent_metrics, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RnnDbn {
    pub layers: Vec<RnnRbm>,
    pub totals: Vec<LayerTotals>,
}

/// A recurrent layer stacked on `parent`: the static part as in
/// [`inherited_layer`], fresh recurrent matrices and `K = J_parent`.
pub fn inherited_rnn_layer(parent: &RnnRbm, rng: &mut RngStream) -> RnnRbm {
    let rbm = inherited_layer(&parent.rbm, rng);
    RnnRbm::with_rbm(rbm, parent.n_hidden(), rng)
}

impl RnnDbn {
    pub fn new(first: RnnRbm) -> Self {
        Self {
            layers: vec![first],
            totals: Vec::new(),
        }
    }

    pub fn from_layers(layers: Vec<RnnRbm>) -> Result<Self> {
        let m = Self {
            layers,
            totals: Vec::new(),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_visible(&self) -> usize {
        self.layers[0].n_visible()
    }

    pub fn top(&self) -> &RnnRbm {
        self.layers.last().expect("an rnn-dbn has at least one layer")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Empty("rnn-dbn layers"));
        }
        for pair in self.layers.windows(2) {
            check_dim("layer chain", pair[0].n_hidden(), pair[1].n_visible())?;
        }
        for l in &self.layers {
            l.validate()?;
        }
        Ok(())
    }

    /// The first `depth` layers as a model of their own.
    pub fn truncated(&self, depth: usize) -> Result<Self> {
        if depth == 0 || depth > self.n_layers() {
            return Err(Error::IndexOutOfRange {
                what: "layer depth",
                index: depth,
                len: self.n_layers(),
            });
        }
        Ok(Self {
            layers: self.layers[..depth].to_vec(),
            totals: self.totals.iter().copied().take(depth).collect(),
        })
    }

    pub fn should_generate_layer(&self, cfg: &LayerGenConfig) -> bool {
        should_generate_layer(&self.totals, cfg)
    }

    pub fn generate_layer(&mut self, cfg: &LayerGenConfig, rng: &mut RngStream) -> Result<bool> {
        if !self.should_generate_layer(cfg) {
            return Ok(false);
        }
        let layer = inherited_rnn_layer(self.top(), rng);
        self.layers.push(layer);
        Ok(true)
    }

    /// Input sequence of layer `depth` (0 is the data itself).
    pub fn propagate_through(&self, seq: ArrayView2<f64>, depth: usize) -> Result<Array2<f64>> {
        let mut x = seq.to_owned();
        for l in &self.layers[..depth] {
            x = l.deterministic_hidden_sequence(x.view())?;
        }
        Ok(x)
    }

    /// Initial recurrent state of every layer.
    pub fn initial_states(&self) -> Vec<Array1<f64>> {
        self.layers.iter().map(|l| l.u0.clone()).collect()
    }

    /// Feeds one visible frame through every layer, updating each state.
    pub fn advance(&self, states: &mut [Array1<f64>], v: ArrayView1<f64>) -> Result<()> {
        check_dim("layer states", self.n_layers(), states.len())?;
        let mut x = v.to_owned();
        for (layer, u) in self.layers.iter().zip(states.iter_mut()) {
            let (_, c_t) = layer.temporal_biases(u.view())?;
            let mut h = x.dot(&layer.rbm.w);
            h += &c_t;
            let h = h.mapv_into(sigmoid);
            *u = layer.state_update(u.view(), x.view())?;
            x = h;
        }
        Ok(())
    }

    /// Visible marginals of the next frame: the top layer's mean-field
    /// prediction mapped down by one visible-conditional pass per layer,
    /// each with that layer's time-dependent visible bias.
    pub fn predict_from_states(&self, states: &[Array1<f64>]) -> Result<Array1<f64>> {
        check_dim("layer states", self.n_layers(), states.len())?;
        let top = self.top();
        let mut p = top.predict_from_state(states[self.n_layers() - 1].view());
        for (layer, u) in self.layers.iter().zip(states).rev().skip(1) {
            let (b_t, _) = layer.temporal_biases(u.view())?;
            let mut a = layer.rbm.w.dot(&p);
            a += &b_t;
            p = a.mapv_into(sigmoid);
        }
        Ok(p)
    }

    pub fn predict_next_deep(&self, prefix: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_dim("visible", self.n_visible(), prefix.ncols())?;
        let mut states = self.initial_states();
        for v in prefix.rows() {
            self.advance(&mut states, v)?;
        }
        self.predict_from_states(&states)
    }

    /// Prediction of frame `t` from frames `0..t` for `t = 1..T`.
    pub fn predict_sequence(&self, seq: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("visible", self.n_visible(), seq.ncols())?;
        let t_len = seq.nrows();
        let mut out = Array2::zeros((t_len.saturating_sub(1), self.n_visible()));
        let mut states = self.initial_states();
        for t in 1..t_len {
            self.advance(&mut states, seq.row(t - 1))?;
            out.row_mut(t - 1).assign(&self.predict_from_states(&states)?);
        }
        Ok(out)
    }

    pub fn prediction_metrics(&self, seqs: &[ArrayView2<f64>]) -> Result<MetricAccumulator> {
        let mut acc = MetricAccumulator::default();
        for s in seqs {
            if s.nrows() < 2 {
                continue;
            }
            let pred = self.predict_sequence(*s)?;
            acc.add(pred.view(), s.slice(ndarray::s![1.., ..]));
        }
        Ok(acc)
    }

    /// Autoregressive sampling through the whole stack.
    pub fn sample(&self, length: usize, rng: &mut RngStream) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((length, self.n_visible()));
        let mut states = self.initial_states();
        for t in 0..length {
            let p = self.predict_from_states(&states)?;
            let v = sample_bernoulli(&p, rng);
            self.advance(&mut states, v.view())?;
            out.row_mut(t).assign(&v);
        }
        Ok(out)
    }
}

/// Epoch-by-epoch greedy trainer for [`RnnDbn`]; a single-layer run
/// (`max_layers = 1`) is the adaptive RNN-RBM.
#[derive(Debug, Clone)]
pub struct RnnDbnTrainer {
    pub cfg: TrainConfig,
    pub seed: u64,
    pub model: RnnDbn,
    pub ctl: StructureController,
    pub log: TrainLog,
    pub finished: bool,
    data: Vec<Array2<f64>>,
    input: Vec<Array2<f64>>,
}

fn check_sequences(seqs: &[Array2<f64>]) -> Result<usize> {
    let first = seqs.first().ok_or(Error::Empty("training data"))?;
    for s in seqs {
        if s.nrows() == 0 {
            return Err(Error::Empty("sequence"));
        }
        check_dim("visible", first.ncols(), s.ncols())?;
    }
    Ok(first.ncols())
}

impl RnnDbnTrainer {
    pub fn new(cfg: TrainConfig, seed: u64, data: Vec<Array2<f64>>) -> Result<Self> {
        cfg.validate()?;
        let n_visible = check_sequences(&data)?;
        let mut init = RngStream::new(seed).split(0).split(INIT_STREAM);
        let k = cfg.state_dim.unwrap_or(cfg.initial_hidden);
        let first = RnnRbm::new(n_visible, cfg.initial_hidden, k, &mut init);
        let ctl = cfg.controller(n_visible, cfg.initial_hidden);
        Ok(Self {
            cfg,
            seed,
            model: RnnDbn::new(first),
            ctl,
            log: TrainLog::default(),
            finished: false,
            input: data.clone(),
            data,
        })
    }

    pub fn restore(
        cfg: TrainConfig,
        seed: u64,
        data: Vec<Array2<f64>>,
        model: RnnDbn,
        ctl: StructureController,
        log: TrainLog,
        finished: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        let n_visible = check_sequences(&data)?;
        check_dim("visible", model.n_visible(), n_visible)?;
        let depth = model.n_layers() - 1;
        let input = data
            .iter()
            .map(|s| model.propagate_through(s.view(), depth))
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg,
            seed,
            model,
            ctl,
            log,
            finished,
            data,
            input,
        })
    }

    pub fn data(&self) -> &[Array2<f64>] {
        &self.data
    }

    pub fn current_layer(&self) -> usize {
        self.model.n_layers() - 1
    }

    pub fn step_epoch(&mut self) -> Result<bool> {
        if self.finished {
            return Ok(false);
        }
        let l = self.current_layer();
        let mut rng = RngStream::new(self.seed).split(l as u64).split(self.ctl.epoch as u64);
        let views: Vec<ArrayView2<f64>> = self.input.iter().map(|s| s.view()).collect();
        let layer = self.model.layers.last_mut().expect("non-empty");
        let events = recurrent_epoch(layer, &mut self.ctl, &views, &self.cfg, &mut rng)?;
        let m = recurrent_metrics(layer, &views)?;
        let mut row = LogRow {
            epoch: self.ctl.epoch,
            layer: l + 1,
            energy: m.energy,
            error: m.error,
            wd_c: self.ctl.stats.total_var_c(),
            wd_w: self.ctl.stats.total_var_w(),
            n_hidden: layer.n_hidden(),
            n_layers: self.model.n_layers(),
            event: String::new(),
        };
        row.push_events(&events);
        if self.ctl.epoch >= self.cfg.epochs {
            self.model.totals.push(layer_totals(&self.ctl.stats, m.energy)?);
            let mut init = RngStream::new(self.seed).split(l as u64 + 1).split(INIT_STREAM);
            if self.model.generate_layer(&self.cfg.layers, &mut init)? {
                let (wd_sum, energy_sum) = layer_sums(&self.model.totals, &self.cfg.layers);
                row.push_events(&[StructureEvent::LayerGenerated {
                    layer: l + 2,
                    wd_sum,
                    energy_sum,
                }]);
                let below = &self.model.layers[l];
                self.input = self
                    .input
                    .iter()
                    .map(|s| below.deterministic_hidden_sequence(s.view()))
                    .collect::<Result<_>>()?;
                let top = self.model.top();
                self.ctl = self.cfg.controller(top.n_visible(), top.n_hidden());
            } else {
                self.finished = true;
            }
        }
        self.log.push(row);
        Ok(!self.finished)
    }

    pub fn run(&mut self) -> Result<()> {
        while self.step_epoch()? {}
        Ok(())
    }

    pub fn into_parts(self) -> (RnnDbn, TrainLog) {
        (self.model, self.log)
    }
}

pub fn train_adaptive_rnn_dbn(
    seqs: &[Array2<f64>],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(RnnDbn, TrainLog)> {
    let mut t = RnnDbnTrainer::new(cfg.clone(), seed, seqs.to_vec())?;
    t.run()?;
    Ok(t.into_parts())
}

/// Single-layer adaptive RNN-RBM training.
pub fn train_adaptive_rnn_rbm(seqs: &[Array2<f64>], cfg: &TrainConfig, seed: u64) -> Result<(RnnRbm, TrainLog)> {
    let mut cfg = cfg.clone();
    cfg.layers.max_layers = 1;
    let (mut model, log) = train_adaptive_rnn_dbn(seqs, &cfg, seed)?;
    Ok((model.layers.remove(0), log))
}
