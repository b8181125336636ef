//! Static deep belief network with automatic layer growth.
//!
//! Layers are trained greedily. After layer `k` completes, a new layer is
//! appended when both
//!
//! ```text
//! Σ_{l≤k} α_WD · WD_l > θ_L1    and    Σ_{l≤k} α_E · |E_l| > θ_L2
//! ```
//!
//! hold and `k < max_layers`. `WD_l` is the total gradient variance of `c`
//! and `W` in layer `l`, `E_l` the mean data energy.

use ndarray::{Array1, Array2, ArrayView2};

use crate::adapt::{GradientStats, StructureController, StructureEvent};
use crate::error::{check_dim, Error, Result};
use crate::log::{LogRow, TrainLog};
use crate::numerics::{bits_of, log_sum_exp, softplus, RngStream};
use crate::rbm::{Rbm, INIT_WEIGHT_SD};
use crate::train::{static_epoch, static_metrics, TrainConfig};

/// Largest layer width accepted by [`Dbn::log_prob_visible_exact`].
pub const DBN_EXACT_WIDTH_LIMIT: usize = 16;

/// Stream index reserved for layer initialisation.
pub(crate) const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGenConfig {
    pub alpha_wd: f64,
    pub alpha_e: f64,
    pub theta_l1: f64,
    pub theta_l2: f64,
    pub max_layers: usize,
}

impl Default for LayerGenConfig {
    fn default() -> Self {
        Self {
            alpha_wd: 1.0,
            alpha_e: 1.0,
            theta_l1: 0.01,
            theta_l2: 0.01,
            max_layers: 4,
        }
    }
}

impl LayerGenConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("layer.alpha_wd", self.alpha_wd),
            ("layer.alpha_e", self.alpha_e),
            ("layer.theta_l1", self.theta_l1),
            ("layer.theta_l2", self.theta_l2),
        ] {
            if !x.is_finite() || x <= 0.0 {
                return Err(Error::Config(format!("{name} must be positive, got {x}")));
            }
        }
        if self.max_layers == 0 {
            return Err(Error::Config("layer.max_layers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Totals of one trained layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerTotals {
    pub wd: f64,
    pub energy: f64,
}

/// `WD = Σ_j var(dc_j) + Σ_ij var(dW_ij)` from the layer's statistics, with
/// the given mean data energy.
pub fn layer_totals(stats: &GradientStats, mean_energy: f64) -> Result<LayerTotals> {
    if stats.counts.iter().all(|&n| n == 0) && stats.n_hidden() > 0 {
        return Err(Error::Empty("layer statistics (untrained layer)"));
    }
    Ok(LayerTotals {
        wd: stats.total_var_c() + stats.total_var_w(),
        energy: mean_energy,
    })
}

/// `(Σ α_WD·WD_l, Σ α_E·|E_l|)` over the given layers.
pub fn layer_sums(totals: &[LayerTotals], cfg: &LayerGenConfig) -> (f64, f64) {
    let wd = totals.iter().map(|t| cfg.alpha_wd * t.wd).sum();
    let e = totals.iter().map(|t| cfg.alpha_e * t.energy.abs()).sum();
    (wd, e)
}

/// Both sums strictly above their thresholds and room for another layer.
pub fn should_generate_layer(totals: &[LayerTotals], cfg: &LayerGenConfig) -> bool {
    if totals.is_empty() || totals.len() >= cfg.max_layers {
        return false;
    }
    let (wd, e) = layer_sums(totals, cfg);
    wd > cfg.theta_l1 && e > cfg.theta_l2
}

/// A layer stacked on `parent`: square, `b` and `c` copied from the parent's
/// `c`, `W ~ N(0, 0.01²)`.
pub fn inherited_layer(parent: &Rbm, rng: &mut RngStream) -> Rbm {
    let j = parent.n_hidden();
    Rbm {
        b: parent.c.clone(),
        c: parent.c.clone(),
        w: rng.normal_matrix(j, j, INIT_WEIGHT_SD),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dbn {
    pub layers: Vec<Rbm>,
    /// Totals of every completed layer.
    pub totals: Vec<LayerTotals>,
}

impl Dbn {
    pub fn new(first: Rbm) -> Self {
        Self {
            layers: vec![first],
            totals: Vec::new(),
        }
    }

    pub fn from_layers(layers: Vec<Rbm>) -> Result<Self> {
        let dbn = Self {
            layers,
            totals: Vec::new(),
        };
        dbn.validate()?;
        Ok(dbn)
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_visible(&self) -> usize {
        self.layers[0].n_visible()
    }

    pub fn top(&self) -> &Rbm {
        self.layers.last().expect("a dbn has at least one layer")
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Empty("dbn layers"));
        }
        for pair in self.layers.windows(2) {
            check_dim("layer chain", pair[0].n_hidden(), pair[1].n_visible())?;
        }
        for l in &self.layers {
            l.check_finite()?;
        }
        Ok(())
    }

    pub fn should_generate_layer(&self, cfg: &LayerGenConfig) -> bool {
        should_generate_layer(&self.totals, cfg)
    }

    /// Appends an inherited layer when the growth rule holds.
    pub fn generate_layer(&mut self, cfg: &LayerGenConfig, rng: &mut RngStream) -> Result<bool> {
        if !self.should_generate_layer(cfg) {
            return Ok(false);
        }
        let layer = inherited_layer(self.top(), rng);
        self.layers.push(layer);
        Ok(true)
    }

    /// Hidden probabilities of the top layer.
    pub fn propagate_up(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.propagate_through(data, self.n_layers())
    }

    /// Hidden probabilities after the first `depth` layers.
    pub fn propagate_through(&self, data: ArrayView2<f64>, depth: usize) -> Result<Array2<f64>> {
        let mut x = data.to_owned();
        for l in &self.layers[..depth] {
            x = l.hidden_conditional_batch(x.view())?;
        }
        Ok(x)
    }

    /// Mean-field reconstruction: up through every layer, then back down.
    pub fn reconstruct(&self, data: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("visible", self.n_visible(), data.ncols())?;
        let mut x = self.propagate_up(data)?;
        for l in self.layers.iter().rev() {
            x = l.visible_conditional_batch(x.view())?;
        }
        Ok(x)
    }

    /// `log p(v)` of the generative model: the top RBM's marginal over its
    /// visible layer, pushed down through the directed conditionals
    /// `p(h_{l-1} | h_l)` of the lower layers.
    pub fn log_prob_visible_exact(&self, v: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_dim("visible", self.n_visible(), v.ncols())?;
        for l in &self.layers {
            if l.n_visible() > DBN_EXACT_WIDTH_LIMIT || l.n_hidden() > DBN_EXACT_WIDTH_LIMIT {
                return Err(Error::Capacity {
                    needed: l.n_visible().max(l.n_hidden()),
                    limit: DBN_EXACT_WIDTH_LIMIT,
                });
            }
        }
        let top = self.top();
        // log p(x) over states x of the top layer's visible units.
        let n_top = top.n_visible();
        let log_z = top.log_partition_function_exact()?;
        let mut log_p: Vec<f64> = (0..1u64 << n_top)
            .map(|s| Ok(-top.free_energy(bits_of(s, n_top).view())? - log_z))
            .collect::<Result<_>>()?;
        for layer in self.layers[..self.n_layers() - 1].iter().rev() {
            let n_below = layer.n_visible();
            let n_above = layer.n_hidden();
            let mut next = Vec::with_capacity(1 << n_below);
            let states_above: Vec<Array1<f64>> = (0..1u64 << n_above).map(|s| bits_of(s, n_above)).collect();
            let act: Vec<Array1<f64>> = states_above
                .iter()
                .map(|h| &layer.b + &layer.w.dot(h))
                .collect();
            for s in 0..1u64 << n_below {
                let x = bits_of(s, n_below);
                let terms = act.iter().zip(&log_p).map(|(a, &lp)| {
                    // log p(x | h) = Σ_i x_i a_i - softplus(a_i)
                    lp + a.iter().zip(&x).map(|(&ai, &xi)| xi * ai - softplus(ai)).sum::<f64>()
                });
                next.push(log_sum_exp(terms));
            }
            log_p = next;
        }
        let mut out = Array1::zeros(v.nrows());
        for (n, row) in v.rows().into_iter().enumerate() {
            let mut idx = 0u64;
            for (i, &x) in row.iter().enumerate() {
                if x != 0.0 && x != 1.0 {
                    return Err(Error::Data(format!("non-binary visible value {x}")));
                }
                if x == 1.0 {
                    idx |= 1 << i;
                }
            }
            out[n] = log_p[idx as usize];
        }
        Ok(out)
    }

    pub fn mean_log_likelihood_exact(&self, v: ArrayView2<f64>) -> Result<f64> {
        if v.nrows() == 0 {
            return Err(Error::Empty("batch"));
        }
        Ok(self.log_prob_visible_exact(v)?.mean().expect("non-empty"))
    }
}

/// Epoch-by-epoch greedy trainer for [`Dbn`]. Each layer gets `cfg.epochs`
/// epochs; the random stream of epoch `e` of layer `l` depends only on
/// `(seed, l, e)`, so a restored trainer continues exactly.
#[derive(Debug, Clone)]
pub struct DbnTrainer {
    pub cfg: TrainConfig,
    pub seed: u64,
    pub dbn: Dbn,
    /// Controller of the layer currently being trained.
    pub ctl: StructureController,
    pub log: TrainLog,
    pub finished: bool,
    data: Array2<f64>,
    input: Array2<f64>,
}

impl DbnTrainer {
    pub fn new(cfg: TrainConfig, seed: u64, data: Array2<f64>) -> Result<Self> {
        cfg.validate()?;
        if data.nrows() == 0 {
            return Err(Error::Empty("training data"));
        }
        let root = RngStream::new(seed);
        let mut init = root.split(0).split(INIT_STREAM);
        let first = Rbm::new(data.ncols(), cfg.initial_hidden, &mut init);
        let ctl = cfg.controller(data.ncols(), cfg.initial_hidden);
        Ok(Self {
            cfg,
            seed,
            dbn: Dbn::new(first),
            ctl,
            log: TrainLog::default(),
            finished: false,
            input: data.clone(),
            data,
        })
    }

    /// Rebuild from saved state; the current layer's input is recomputed.
    pub fn restore(
        cfg: TrainConfig,
        seed: u64,
        data: Array2<f64>,
        dbn: Dbn,
        ctl: StructureController,
        log: TrainLog,
        finished: bool,
    ) -> Result<Self> {
        cfg.validate()?;
        dbn.validate()?;
        check_dim("visible", dbn.n_visible(), data.ncols())?;
        let input = dbn.propagate_through(data.view(), dbn.n_layers() - 1)?;
        Ok(Self {
            cfg,
            seed,
            dbn,
            ctl,
            log,
            finished,
            data,
            input,
        })
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    /// Index of the layer being trained (0-based).
    pub fn current_layer(&self) -> usize {
        self.dbn.n_layers() - 1
    }

    /// Trains one epoch of the current layer; returns `false` once done.
    pub fn step_epoch(&mut self) -> Result<bool> {
        if self.finished {
            return Ok(false);
        }
        let l = self.current_layer();
        let layer_rng = RngStream::new(self.seed).split(l as u64);
        let mut rng = layer_rng.split(self.ctl.epoch as u64);
        let rbm = self.dbn.layers.last_mut().expect("non-empty");
        let events = static_epoch(rbm, &mut self.ctl, self.input.view(), &self.cfg, &mut rng)?;
        let m = static_metrics(rbm, self.input.view())?;
        let mut row = LogRow {
            epoch: self.ctl.epoch,
            layer: l + 1,
            energy: m.energy,
            error: m.error,
            wd_c: self.ctl.stats.total_var_c(),
            wd_w: self.ctl.stats.total_var_w(),
            n_hidden: rbm.n_hidden(),
            n_layers: self.dbn.n_layers(),
            event: String::new(),
        };
        row.push_events(&events);
        if self.ctl.epoch >= self.cfg.epochs {
            self.dbn.totals.push(layer_totals(&self.ctl.stats, m.energy)?);
            let mut init = RngStream::new(self.seed).split(l as u64 + 1).split(INIT_STREAM);
            if self.dbn.generate_layer(&self.cfg.layers, &mut init)? {
                let (wd_sum, energy_sum) = layer_sums(&self.dbn.totals, &self.cfg.layers);
                row.push_events(&[StructureEvent::LayerGenerated {
                    layer: l + 2,
                    wd_sum,
                    energy_sum,
                }]);
                self.input = self.dbn.layers[l].hidden_conditional_batch(self.input.view())?;
                let top = self.dbn.top();
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

    pub fn into_parts(self) -> (Dbn, TrainLog) {
        (self.dbn, self.log)
    }
}

/// Greedy adaptive DBN training on a binary data matrix.
pub fn train_adaptive_dbn(data: ArrayView2<f64>, cfg: &TrainConfig, seed: u64) -> Result<(Dbn, TrainLog)> {
    let mut t = DbnTrainer::new(cfg.clone(), seed, data.to_owned())?;
    t.run()?;
    Ok(t.into_parts())
}
