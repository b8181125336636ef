//! Structure adaptation: gradient-variance monitoring, neuron generation and
//! annihilation, and the forgetting penalties.
//!
//! The routines here work on anything implementing [`HiddenLayer`], so the
//! static RBM and the recurrent model share one implementation. Structural
//! edits only happen at epoch boundaries, driven by [`StructureController`].

use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{check_dim, Error, Result};
use crate::numerics::RngStream;
use crate::rbm::{Rbm, RbmGradient};

/// Consecutive trigger-free epochs after which generation is considered done.
pub const GENERATION_QUIET_EPOCHS: usize = 5;

/// Default decay of the gradient moment averages.
pub const DEFAULT_STATS_DECAY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptConfig {
    pub alpha_c: f64,
    pub alpha_w: f64,
    /// Generation threshold.
    pub theta_g: f64,
    /// Annihilation threshold on mean hidden activation.
    pub theta_a: f64,
    pub generation_phase_epochs: usize,
    pub min_hidden: usize,
    pub max_hidden: usize,
    pub split_noise_sd: f64,
    pub stats_decay: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            alpha_c: 1.0,
            alpha_w: 1.0,
            theta_g: 0.001,
            theta_a: 0.1,
            generation_phase_epochs: 50,
            min_hidden: 1,
            max_hidden: 1000,
            split_noise_sd: 0.01,
            stats_decay: DEFAULT_STATS_DECAY,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {x}")))
            }
        };
        positive("adapt.alpha_c", self.alpha_c)?;
        positive("adapt.alpha_W", self.alpha_w)?;
        positive("adapt.theta_G", self.theta_g)?;
        if !(self.theta_a >= 0.0 && self.theta_a < 1.0) {
            return Err(Error::Config(format!("adapt.theta_A must be in [0,1), got {}", self.theta_a)));
        }
        if self.min_hidden == 0 || self.min_hidden > self.max_hidden {
            return Err(Error::Config(format!(
                "need 1 <= min_hidden ({}) <= max_hidden ({})",
                self.min_hidden, self.max_hidden
            )));
        }
        if !(self.split_noise_sd >= 0.0 && self.split_noise_sd.is_finite()) {
            return Err(Error::Config("adapt.split_noise_sd must be >= 0".into()));
        }
        if !(self.stats_decay > 0.0 && self.stats_decay < 1.0) {
            return Err(Error::Config("adapt.stats_decay must be in (0,1)".into()));
        }
        Ok(())
    }
}

/// Exponentially decayed first and second moments of the `c` and `W`
/// gradients, one decay counter per hidden unit so that freshly generated
/// units start from an empty history.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientStats {
    pub decay: f64,
    pub c_mean: Array1<f64>,
    pub c_sq: Array1<f64>,
    pub w_mean: Array2<f64>,
    pub w_sq: Array2<f64>,
    pub counts: Vec<u64>,
}

impl GradientStats {
    pub fn new(n_visible: usize, n_hidden: usize, decay: f64) -> Self {
        Self {
            decay,
            c_mean: Array1::zeros(n_hidden),
            c_sq: Array1::zeros(n_hidden),
            w_mean: Array2::zeros((n_visible, n_hidden)),
            w_sq: Array2::zeros((n_visible, n_hidden)),
            counts: vec![0; n_hidden],
        }
    }

    pub fn n_visible(&self) -> usize {
        self.w_mean.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.c_mean.len()
    }

    /// `m <- λm + (1-λ)g`, `s <- λs + (1-λ)g²`.
    pub fn update(&mut self, dc: &Array1<f64>, dw: &Array2<f64>) -> Result<()> {
        check_dim("hidden", self.n_hidden(), dc.len())?;
        check_dim("weight rows", self.n_visible(), dw.nrows())?;
        check_dim("weight columns", self.n_hidden(), dw.ncols())?;
        let lam = self.decay;
        let mix = |m: &mut f64, g: f64| *m = lam * *m + (1.0 - lam) * g;
        self.c_mean.iter_mut().zip(dc).for_each(|(m, &g)| mix(m, g));
        self.c_sq.iter_mut().zip(dc).for_each(|(m, &g)| mix(m, g * g));
        self.w_mean.iter_mut().zip(dw).for_each(|(m, &g)| mix(m, g));
        self.w_sq.iter_mut().zip(dw).for_each(|(m, &g)| mix(m, g * g));
        self.counts.iter_mut().for_each(|n| *n += 1);
        Ok(())
    }

    /// Bias-corrected variance from the two moments; zero with no history.
    fn variance(&self, mean: f64, sq: f64, count: u64) -> f64 {
        if count == 0 {
            return 0.0;
        }
        let correction = 1.0 - self.decay.powi(count.min(i32::MAX as u64) as i32);
        let m = mean / correction;
        let s = sq / correction;
        (s - m * m).max(0.0)
    }

    pub fn var_c(&self, j: usize) -> f64 {
        self.variance(self.c_mean[j], self.c_sq[j], self.counts[j])
    }

    pub fn var_w(&self, i: usize, j: usize) -> f64 {
        self.variance(self.w_mean[[i, j]], self.w_sq[[i, j]], self.counts[j])
    }

    /// Mean over visible units of the weight variances feeding hidden unit `j`.
    pub fn mean_var_w(&self, j: usize) -> f64 {
        let n = self.n_visible();
        if n == 0 {
            return 0.0;
        }
        (0..n).map(|i| self.var_w(i, j)).sum::<f64>() / n as f64
    }

    pub fn total_var_c(&self) -> f64 {
        (0..self.n_hidden()).map(|j| self.var_c(j)).sum()
    }

    pub fn total_var_w(&self) -> f64 {
        (0..self.n_hidden())
            .map(|j| (0..self.n_visible()).map(|i| self.var_w(i, j)).sum::<f64>())
            .sum()
    }

    /// Rebuild hidden-unit entries following `layout`; children start empty.
    fn relayout(&mut self, layout: &[HiddenSource]) {
        let n_visible = self.n_visible();
        let mut next = GradientStats::new(n_visible, layout.len(), self.decay);
        for (dst, src) in layout.iter().enumerate() {
            if let HiddenSource::Keep(j) = *src {
                next.c_mean[dst] = self.c_mean[j];
                next.c_sq[dst] = self.c_sq[j];
                next.w_mean.column_mut(dst).assign(&self.w_mean.column(j));
                next.w_sq.column_mut(dst).assign(&self.w_sq.column(j));
                next.counts[dst] = self.counts[j];
            }
        }
        *self = next;
    }
}

/// Origin of a hidden unit after a structural edit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HiddenSource {
    Keep(usize),
    ChildOf(usize),
}

/// Layout that places a child directly after each listed parent.
pub fn split_layout(n_hidden: usize, parents: &[usize]) -> Vec<HiddenSource> {
    let mut layout = Vec::with_capacity(n_hidden + parents.len());
    for j in 0..n_hidden {
        layout.push(HiddenSource::Keep(j));
        if parents.contains(&j) {
            layout.push(HiddenSource::ChildOf(j));
        }
    }
    layout
}

/// A model whose hidden layer can be resized.
pub trait HiddenLayer {
    fn rbm(&self) -> &Rbm;

    /// Rebuild the hidden layer following `layout`. Children inherit their
    /// parent's `c_j` and `W` column plus `N(0, noise_sd²)` noise.
    fn relayout_hidden(&mut self, layout: &[HiddenSource], noise_sd: f64, rng: &mut RngStream);

    fn n_hidden(&self) -> usize {
        self.rbm().n_hidden()
    }
}

impl Rbm {
    pub(crate) fn relayout_hidden_params(
        &mut self,
        layout: &[HiddenSource],
        noise_sd: f64,
        rng: &mut RngStream,
    ) {
        let n_visible = self.n_visible();
        let mut c = Array1::zeros(layout.len());
        let mut w = Array2::zeros((n_visible, layout.len()));
        for (dst, src) in layout.iter().enumerate() {
            match *src {
                HiddenSource::Keep(j) => {
                    c[dst] = self.c[j];
                    w.column_mut(dst).assign(&self.w.column(j));
                }
                HiddenSource::ChildOf(j) => {
                    c[dst] = self.c[j] + rng.normal(noise_sd);
                    for i in 0..n_visible {
                        w[[i, dst]] = self.w[[i, j]] + rng.normal(noise_sd);
                    }
                }
            }
        }
        self.c = c;
        self.w = w;
    }
}

impl HiddenLayer for Rbm {
    fn rbm(&self) -> &Rbm {
        self
    }

    fn relayout_hidden(&mut self, layout: &[HiddenSource], noise_sd: f64, rng: &mut RngStream) {
        self.relayout_hidden_params(layout, noise_sd, rng);
    }
}

/// `(α_c · var(dc_j)) · (α_W · mean_i var(dW_ij))`.
pub fn generation_score(stats: &GradientStats, cfg: &AdaptConfig, j: usize) -> Result<f64> {
    if j >= stats.n_hidden() {
        return Err(Error::IndexOutOfRange {
            what: "hidden units",
            index: j,
            len: stats.n_hidden(),
        });
    }
    Ok((cfg.alpha_c * stats.var_c(j)) * (cfg.alpha_w * stats.mean_var_w(j)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generation {
    /// Parent index in the pre-edit layer.
    pub parent: usize,
    pub score: f64,
}

/// One generation sweep. Scores are taken on the pre-edit structure; every
/// unit scoring strictly above `theta_g` gets a child inserted right after it,
/// lowest index first, until `max_hidden` is reached.
pub fn maybe_generate<M: HiddenLayer>(
    model: &mut M,
    stats: &mut GradientStats,
    cfg: &AdaptConfig,
    rng: &mut RngStream,
) -> Result<Vec<Generation>> {
    let n_hidden = model.n_hidden();
    check_dim("hidden", n_hidden, stats.n_hidden())?;
    let room = cfg.max_hidden.saturating_sub(n_hidden);
    let mut triggered = Vec::new();
    for j in 0..n_hidden {
        if triggered.len() == room {
            break;
        }
        let score = generation_score(stats, cfg, j)?;
        if score > cfg.theta_g {
            triggered.push(Generation { parent: j, score });
        }
    }
    if triggered.is_empty() {
        return Ok(triggered);
    }
    let parents: Vec<usize> = triggered.iter().map(|g| g.parent).collect();
    let layout = split_layout(n_hidden, &parents);
    model.relayout_hidden(&layout, cfg.split_noise_sd, rng);
    stats.relayout(&layout);
    Ok(triggered)
}

/// Mask of units whose mean activation is strictly below `theta_a`, never
/// leaving fewer than `min_hidden` units (the most active marked units are
/// spared first).
pub fn annihilation_mask_from_activations(mean_activation: &[f64], cfg: &AdaptConfig) -> Vec<bool> {
    let mut mask: Vec<bool> = mean_activation.iter().map(|&a| a < cfg.theta_a).collect();
    let kept = mask.iter().filter(|m| !**m).count();
    if kept < cfg.min_hidden {
        let mut marked: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
        marked.sort_by(|&a, &b| mean_activation[b].total_cmp(&mean_activation[a]).then(a.cmp(&b)));
        for &j in marked.iter().take(cfg.min_hidden - kept) {
            mask[j] = false;
        }
    }
    mask
}

/// Mean of `p(h_j = 1 | v_n)` over the rows of `sample`.
pub fn mean_hidden_activation(rbm: &Rbm, sample: ArrayView2<f64>) -> Result<Array1<f64>> {
    if sample.nrows() == 0 {
        return Err(Error::Empty("dataset sample"));
    }
    let ph = rbm.hidden_conditional_batch(sample)?;
    Ok(ph.mean_axis(Axis(0)).expect("non-empty"))
}

pub fn annihilation_mask(rbm: &Rbm, sample: ArrayView2<f64>, cfg: &AdaptConfig) -> Result<Vec<bool>> {
    let act = mean_hidden_activation(rbm, sample)?;
    Ok(annihilation_mask_from_activations(act.as_slice().expect("contiguous"), cfg))
}

/// Remove the masked hidden units. Returns the removed (pre-edit) indices.
pub fn apply_annihilation<M: HiddenLayer>(
    model: &mut M,
    stats: &mut GradientStats,
    mask: &[bool],
    min_hidden: usize,
) -> Result<Vec<usize>> {
    check_dim("annihilation mask", model.n_hidden(), mask.len())?;
    check_dim("hidden", model.n_hidden(), stats.n_hidden())?;
    let removed: Vec<usize> = (0..mask.len()).filter(|&j| mask[j]).collect();
    if removed.is_empty() {
        return Ok(removed);
    }
    let remaining = mask.len() - removed.len();
    if remaining < min_hidden.max(1) {
        return Err(Error::Config(format!(
            "annihilation would leave {remaining} hidden units (minimum {})",
            min_hidden.max(1)
        )));
    }
    let layout: Vec<HiddenSource> = (0..mask.len())
        .filter(|&j| !mask[j])
        .map(HiddenSource::Keep)
        .collect();
    // No children in the layout, so the stream is untouched.
    let mut unused = RngStream::new(0);
    model.relayout_hidden(&layout, 0.0, &mut unused);
    stats.relayout(&layout);
    Ok(removed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgettingMode {
    /// `ε₁ ‖W‖₁`
    Decay,
    /// `ε₂ Σ_j min{1 - h_j, h_j}`
    Clarify,
    /// `-ε₃ ‖W′‖₁`, acting through the complement of the sub-threshold mask.
    Selective,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgettingConfig {
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub epsilon3: f64,
    /// Magnitude threshold of the selective mask.
    pub theta_selective: f64,
    pub forgetting_epochs: usize,
    pub selective_epochs: usize,
}

/// Upper bound on the penalty coefficients.
pub const MAX_FORGETTING_COEFFICIENT: f64 = 0.01;

impl Default for ForgettingConfig {
    fn default() -> Self {
        Self {
            epsilon1: 0.001,
            epsilon2: 0.001,
            epsilon3: 0.001,
            theta_selective: 0.1,
            forgetting_epochs: 20,
            selective_epochs: 10,
        }
    }
}

impl ForgettingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, eps) in [
            ("forget.epsilon1", self.epsilon1),
            ("forget.epsilon2", self.epsilon2),
            ("forget.epsilon3", self.epsilon3),
        ] {
            if !(0.0..=MAX_FORGETTING_COEFFICIENT).contains(&eps) {
                return Err(Error::Config(format!(
                    "{name} must be in [0, {MAX_FORGETTING_COEFFICIENT}], got {eps}"
                )));
            }
        }
        if !(self.theta_selective > 0.0 && self.theta_selective.is_finite()) {
            return Err(Error::Config("forget.theta must be positive".into()));
        }
        Ok(())
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `W′`: weights with `|W_ij| < theta` kept, the rest zeroed.
pub fn selective_mask(w: &Array2<f64>, theta: f64) -> Array2<f64> {
    w.mapv(|x| if x.abs() < theta { x } else { 0.0 })
}

/// Ascent-direction contribution of one forgetting penalty, to be added to a
/// data gradient. `visible`/`hidden` are matching rows of inputs and hidden
/// activations; only `Clarify` reads them.
pub fn forgetting_gradient(
    rbm: &Rbm,
    mode: ForgettingMode,
    cfg: &ForgettingConfig,
    visible: ArrayView2<f64>,
    hidden: ArrayView2<f64>,
) -> Result<RbmGradient> {
    let (ni, nj) = (rbm.n_visible(), rbm.n_hidden());
    let mut g = RbmGradient::zeros(ni, nj);
    match mode {
        ForgettingMode::Decay => {
            g.dw = rbm.w.mapv(|x| -cfg.epsilon1 * sign(x));
        }
        ForgettingMode::Selective => {
            let theta = cfg.theta_selective;
            g.dw = rbm
                .w
                .mapv(|x| if x.abs() < theta { 0.0 } else { -cfg.epsilon3 * sign(x) });
        }
        ForgettingMode::Clarify => {
            check_dim("visible", ni, visible.ncols())?;
            check_dim("hidden", nj, hidden.ncols())?;
            check_dim("activation rows", visible.nrows(), hidden.nrows())?;
            let n = hidden.nrows();
            if n == 0 {
                return Ok(g);
            }
            let scale = cfg.epsilon2 / n as f64;
            for (v, h) in visible.rows().into_iter().zip(hidden.rows()) {
                // d/dh min{1-h, h} is +1 below the kink and -1 at or above it.
                let push = h.mapv(|hj| {
                    let slope = if hj < 0.5 { 1.0 } else { -1.0 };
                    -scale * slope * hj * (1.0 - hj)
                });
                g.dc += &push;
                crate::rbm::add_outer(&mut g.dw, 1.0, v, push.view());
            }
        }
    }
    Ok(g)
}

/// `Σ_j min{1 - h_j, h_j}` averaged over rows.
pub fn mean_ambiguity(hidden: ArrayView2<f64>) -> f64 {
    if hidden.nrows() == 0 {
        return 0.0;
    }
    hidden.iter().map(|&h| h.min(1.0 - h)).sum::<f64>() / hidden.nrows() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub enum StructureEvent {
    Generate { parent: usize, score: f64 },
    Annihilate { index: usize, activation: f64 },
    GenerationComplete,
    LayerGenerated { layer: usize, wd_sum: f64, energy_sum: f64 },
}

impl fmt::Display for StructureEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StructureEvent::Generate { parent, score } => write!(f, "generate:{parent}:{score:e}"),
            StructureEvent::Annihilate { index, activation } => {
                write!(f, "annihilate:{index}:{activation:e}")
            }
            StructureEvent::GenerationComplete => f.write_str("generation-complete"),
            StructureEvent::LayerGenerated {
                layer,
                wd_sum,
                energy_sum,
            } => write!(f, "layer:{layer}:{wd_sum:e}:{energy_sum:e}"),
        }
    }
}

/// Per-layer adaptation state across epochs: gradient statistics, the
/// generation / annihilation phase and the forgetting schedule.
///
/// Generation checks run until `generation_phase_epochs` have elapsed or no
/// unit has triggered for [`GENERATION_QUIET_EPOCHS`] epochs. From then on
/// annihilation is checked each epoch, decay+clarify forgetting runs for
/// `forgetting_epochs`, then selective+clarify for `selective_epochs`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureController {
    pub adaptive: bool,
    pub adapt: AdaptConfig,
    pub forgetting: ForgettingConfig,
    pub stats: GradientStats,
    /// Completed epochs.
    pub epoch: usize,
    pub generation_done_at: Option<usize>,
    pub quiet_streak: usize,
}

impl StructureController {
    pub fn new(
        adaptive: bool,
        adapt: AdaptConfig,
        forgetting: ForgettingConfig,
        n_visible: usize,
        n_hidden: usize,
    ) -> Self {
        let stats = GradientStats::new(n_visible, n_hidden, adapt.stats_decay);
        Self {
            adaptive,
            adapt,
            forgetting,
            stats,
            epoch: 0,
            generation_done_at: None,
            quiet_streak: 0,
        }
    }

    pub fn in_generation_phase(&self) -> bool {
        self.adaptive && self.generation_done_at.is_none()
    }

    /// Penalties active during the current (not yet completed) epoch.
    pub fn forgetting_modes(&self) -> Vec<ForgettingMode> {
        let Some(start) = self.generation_done_at.filter(|_| self.adaptive) else {
            return Vec::new();
        };
        let offset = self.epoch - start;
        let f = &self.forgetting;
        if offset < f.forgetting_epochs {
            vec![ForgettingMode::Decay, ForgettingMode::Clarify]
        } else if offset < f.forgetting_epochs + f.selective_epochs {
            vec![ForgettingMode::Selective, ForgettingMode::Clarify]
        } else {
            Vec::new()
        }
    }

    pub fn record_gradient(&mut self, dc: &Array1<f64>, dw: &Array2<f64>) -> Result<()> {
        self.stats.update(dc, dw)
    }

    /// Epoch-boundary structure check. `mean_activation` is only evaluated
    /// when an annihilation check runs.
    pub fn end_epoch<M, F>(
        &mut self,
        model: &mut M,
        mean_activation: F,
        rng: &mut RngStream,
    ) -> Result<Vec<StructureEvent>>
    where
        M: HiddenLayer,
        F: FnOnce(&M) -> Result<Array1<f64>>,
    {
        let mut events = Vec::new();
        if self.adaptive {
            if self.generation_done_at.is_none() {
                let generated = maybe_generate(model, &mut self.stats, &self.adapt, rng)?;
                if generated.is_empty() {
                    self.quiet_streak += 1;
                } else {
                    self.quiet_streak = 0;
                }
                events.extend(generated.iter().map(|g| StructureEvent::Generate {
                    parent: g.parent,
                    score: g.score,
                }));
                if self.quiet_streak >= GENERATION_QUIET_EPOCHS
                    || self.epoch + 1 >= self.adapt.generation_phase_epochs
                {
                    self.generation_done_at = Some(self.epoch + 1);
                    events.push(StructureEvent::GenerationComplete);
                }
            } else {
                let act = mean_activation(model)?;
                let mask = annihilation_mask_from_activations(act.as_slice().expect("contiguous"), &self.adapt);
                let removed = apply_annihilation(model, &mut self.stats, &mask, self.adapt.min_hidden)?;
                events.extend(removed.into_iter().map(|j| StructureEvent::Annihilate {
                    index: j,
                    activation: act[j],
                }));
            }
        }
        self.epoch += 1;
        Ok(events)
    }
}
