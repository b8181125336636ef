//! Shared training configuration and the single-epoch routines used by the
//! static and recurrent layer trainers.

use ndarray::{ArrayView2, Axis};

use crate::adapt::{
    forgetting_gradient, mean_hidden_activation, AdaptConfig, ForgettingConfig, StructureController,
    StructureEvent,
};
use crate::dbn::LayerGenConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricAccumulator;
use crate::numerics::RngStream;
use crate::rbm::{CdConfig, Rbm};
use crate::rnn::{bptt_gradients, stack_frames, RnnRbm, DEFAULT_CLIP_NORM};

/// Everything a layer-wise trainer needs besides data and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub cd: CdConfig,
    /// `false` disables generation, annihilation and forgetting.
    pub adaptive: bool,
    pub adapt: AdaptConfig,
    pub forgetting: ForgettingConfig,
    pub layers: LayerGenConfig,
    /// Epochs per layer.
    pub epochs: usize,
    pub initial_hidden: usize,
    /// Recurrent state width; defaults to the initial hidden width.
    pub state_dim: Option<usize>,
    /// Global gradient-norm bound for recurrent updates.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            cd: CdConfig::default(),
            adaptive: true,
            adapt: AdaptConfig::default(),
            forgetting: ForgettingConfig::default(),
            layers: LayerGenConfig::default(),
            epochs: 100,
            initial_hidden: 10,
            state_dim: None,
            clip_norm: DEFAULT_CLIP_NORM,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.cd.validate()?;
        self.adapt.validate()?;
        self.forgetting.validate()?;
        self.layers.validate()?;
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.initial_hidden == 0 {
            return Err(Error::Config("model.hidden must be at least 1".into()));
        }
        if self.state_dim == Some(0) {
            return Err(Error::Config("model.state_dim must be at least 1".into()));
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return Err(Error::Config("train.clip_norm must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn controller(&self, n_visible: usize, n_hidden: usize) -> StructureController {
        StructureController::new(
            self.adaptive,
            self.adapt.clone(),
            self.forgetting.clone(),
            n_visible,
            n_hidden,
        )
    }
}

/// Metrics of a layer on its training input after an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub energy: f64,
    pub error: f64,
}

/// One epoch of minibatch CD on a static layer followed by the structure check.
pub(crate) fn static_epoch(
    rbm: &mut Rbm,
    ctl: &mut StructureController,
    data: ArrayView2<f64>,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<Vec<StructureEvent>> {
    if data.nrows() == 0 {
        return Err(Error::Empty("training data"));
    }
    let order = rng.permutation(data.nrows());
    for chunk in order.chunks(cfg.cd.batch_size) {
        let batch = data.select(Axis(0), chunk);
        let mut g = rbm.cd_step(batch.view(), &cfg.cd, rng)?;
        ctl.record_gradient(&g.dc, &g.dw)?;
        let modes = ctl.forgetting_modes();
        if !modes.is_empty() {
            let hidden = rbm.hidden_conditional_batch(batch.view())?;
            for mode in modes {
                let pen = forgetting_gradient(rbm, mode, &ctl.forgetting, batch.view(), hidden.view())?;
                g.add_assign(&pen);
            }
        }
        rbm.apply_gradient(&g, cfg.cd.learning_rate)?;
    }
    let events = ctl.end_epoch(rbm, |m| mean_hidden_activation(m, data), rng)?;
    rbm.check_finite()?;
    Ok(events)
}

pub(crate) fn static_metrics(rbm: &Rbm, data: ArrayView2<f64>) -> Result<EpochMetrics> {
    Ok(EpochMetrics {
        energy: rbm.mean_data_energy(data)?,
        error: rbm.reconstruction_error(data)?,
    })
}

/// Mean hidden activation over every frame of every sequence.
pub(crate) fn recurrent_mean_activation(
    model: &RnnRbm,
    seqs: &[ArrayView2<f64>],
) -> Result<ndarray::Array1<f64>> {
    let mut sum = ndarray::Array1::zeros(model.n_hidden());
    let mut frames = 0usize;
    for s in seqs {
        let h = model.deterministic_hidden_sequence(*s)?;
        sum += &h.sum_axis(Axis(0));
        frames += s.nrows();
    }
    if frames == 0 {
        return Err(Error::Empty("training data"));
    }
    Ok(sum / frames as f64)
}

/// One epoch of whole-sequence minibatch BPTT followed by the structure check.
pub(crate) fn recurrent_epoch(
    model: &mut RnnRbm,
    ctl: &mut StructureController,
    seqs: &[ArrayView2<f64>],
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<Vec<StructureEvent>> {
    if seqs.is_empty() {
        return Err(Error::Empty("training data"));
    }
    let order = rng.permutation(seqs.len());
    for chunk in order.chunks(cfg.cd.batch_size) {
        let batch: Vec<ArrayView2<f64>> = chunk.iter().map(|&i| seqs[i]).collect();
        let mut g = bptt_gradients(model, &batch, &cfg.cd, rng)?;
        ctl.record_gradient(&g.rbm.dc, &g.rbm.dw)?;
        let modes = ctl.forgetting_modes();
        if !modes.is_empty() {
            let visible = stack_frames(&batch, model.n_visible());
            let hidden_seqs = batch
                .iter()
                .map(|s| model.deterministic_hidden_sequence(*s))
                .collect::<Result<Vec<_>>>()?;
            let views: Vec<_> = hidden_seqs.iter().map(|h| h.view()).collect();
            let hidden = stack_frames(&views, model.n_hidden());
            for mode in modes {
                let pen = forgetting_gradient(&model.rbm, mode, &ctl.forgetting, visible.view(), hidden.view())?;
                g.rbm.add_assign(&pen);
            }
        }
        g.clip(cfg.clip_norm);
        model.apply_gradient(&g, cfg.cd.learning_rate)?;
    }
    let events = ctl.end_epoch(model, |m| recurrent_mean_activation(m, seqs), rng)?;
    model.validate()?;
    Ok(events)
}

/// Next-frame prediction metrics of a single recurrent layer.
pub fn recurrent_prediction_metrics(model: &RnnRbm, seqs: &[ArrayView2<f64>]) -> Result<MetricAccumulator> {
    let mut acc = MetricAccumulator::default();
    for s in seqs {
        if s.nrows() < 2 {
            continue;
        }
        let pred = model.predict_sequence(*s)?;
        acc.add(pred.view(), s.slice(ndarray::s![1.., ..]));
    }
    Ok(acc)
}

pub(crate) fn recurrent_metrics(model: &RnnRbm, seqs: &[ArrayView2<f64>]) -> Result<EpochMetrics> {
    let mut energy = 0.0;
    let mut frames = 0usize;
    for s in seqs {
        let (e, n) = model.data_energy_sum(*s)?;
        energy += e;
        frames += n;
    }
    Ok(EpochMetrics {
        energy: energy / frames.max(1) as f64,
        error: recurrent_prediction_metrics(model, seqs)?.error(),
    })
}
