//! RNN-RBM: an RBM whose biases at step `t` are affine in a deterministic
//! recurrent state,
//!
//! ```text
//! b_t = b + W_uv u_{t-1}
//! c_t = c + W_uh u_{t-1}
//! u_t = σ(u + W_uu u_{t-1} + W_vu v_t)
//! ```
//!
//! Frame gradients with respect to `(b_t, c_t, W)` come from CD-k (or from
//! exact enumeration on tiny models) and are chained back through the
//! recurrence.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::adapt::{HiddenLayer, HiddenSource};
use crate::error::{check_dim, Error, Result};
use crate::numerics::{sample_bernoulli, sigmoid, RngStream};
use crate::rbm::{add_outer, CdConfig, Rbm, RbmGradient, RbmView, INIT_WEIGHT_SD};

/// Largest `I + J` accepted by [`RnnRbm::sequence_cost_exact`].
pub const SEQUENCE_EXACT_UNIT_LIMIT: usize = 20;

/// Mean-field passes used for next-frame marginals.
pub const MEAN_FIELD_PASSES: usize = 10;

/// Global gradient-norm bound applied before each recurrent update.
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

/// Bounds kept on the learned initial state.
const U0_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RnnRbm {
    pub rbm: Rbm,
    /// State bias `u`, length `K`.
    pub u_bias: Array1<f64>,
    /// `I x K`
    pub w_uv: Array2<f64>,
    /// `J x K`
    pub w_uh: Array2<f64>,
    /// `K x I`
    pub w_vu: Array2<f64>,
    /// `K x K`
    pub w_uu: Array2<f64>,
    /// Initial state `u_0`, entries in `(0, 1)`.
    pub u0: Array1<f64>,
}

/// Gradient over every parameter group of an [`RnnRbm`].
#[derive(Debug, Clone, PartialEq)]
pub struct RnnGradient {
    pub rbm: RbmGradient,
    pub du_bias: Array1<f64>,
    pub dw_uv: Array2<f64>,
    pub dw_uh: Array2<f64>,
    pub dw_vu: Array2<f64>,
    pub dw_uu: Array2<f64>,
    pub du0: Array1<f64>,
}

impl RnnGradient {
    pub fn zeros(n_visible: usize, n_hidden: usize, state_dim: usize) -> Self {
        Self {
            rbm: RbmGradient::zeros(n_visible, n_hidden),
            du_bias: Array1::zeros(state_dim),
            dw_uv: Array2::zeros((n_visible, state_dim)),
            dw_uh: Array2::zeros((n_hidden, state_dim)),
            dw_vu: Array2::zeros((state_dim, n_visible)),
            dw_uu: Array2::zeros((state_dim, state_dim)),
            du0: Array1::zeros(state_dim),
        }
    }

    pub fn sq_norm(&self) -> f64 {
        let rest = self
            .du_bias
            .iter()
            .chain(&self.dw_uv)
            .chain(&self.dw_uh)
            .chain(&self.dw_vu)
            .chain(&self.dw_uu)
            .chain(&self.du0);
        self.rbm.sq_norm() + rest.map(|x| x * x).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.rbm.scale(s);
        self.du_bias *= s;
        self.dw_uv *= s;
        self.dw_uh *= s;
        self.dw_vu *= s;
        self.dw_uu *= s;
        self.du0 *= s;
    }

    /// Rescale to at most `max_norm`; returns the pre-clip norm.
    pub fn clip(&mut self, max_norm: f64) -> f64 {
        let n = self.norm();
        if n > max_norm {
            self.scale(max_norm / n);
        }
        n
    }
}

/// State trajectory and per-step biases of one unrolled sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Unrolled {
    /// `(T+1) x K`, row 0 is `u_0`.
    pub u: Array2<f64>,
    /// `T x I`, row `t` is the visible bias used for frame `t`.
    pub b: Array2<f64>,
    /// `T x J`
    pub c: Array2<f64>,
}

/// How each frame's `(b_t, c_t, W)` gradient is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameEstimator {
    ContrastiveDivergence { k: usize },
    /// Exact `∇ log p(v_t | b_t, c_t, W)`; tiny models only.
    Exact,
}

fn random_unit_interval(rng: &mut RngStream, len: usize) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || loop {
        let x = rng.uniform();
        if x > 0.0 {
            break x;
        }
    })
}

impl RnnRbm {
    /// Fresh model: RBM per [`Rbm::new`], recurrent matrices `N(0, 0.01²)`,
    /// zero state bias, `u_0` uniform in `(0, 1)`.
    pub fn new(n_visible: usize, n_hidden: usize, state_dim: usize, rng: &mut RngStream) -> Self {
        let rbm = Rbm::new(n_visible, n_hidden, rng);
        Self::with_rbm(rbm, state_dim, rng)
    }

    /// Wrap an existing RBM with freshly initialised recurrent parameters.
    pub fn with_rbm(rbm: Rbm, state_dim: usize, rng: &mut RngStream) -> Self {
        let (ni, nj) = (rbm.n_visible(), rbm.n_hidden());
        let w_uv = rng.normal_matrix(ni, state_dim, INIT_WEIGHT_SD);
        let w_uh = rng.normal_matrix(nj, state_dim, INIT_WEIGHT_SD);
        let w_vu = rng.normal_matrix(state_dim, ni, INIT_WEIGHT_SD);
        let w_uu = rng.normal_matrix(state_dim, state_dim, INIT_WEIGHT_SD);
        let u0 = random_unit_interval(rng, state_dim);
        Self {
            rbm,
            u_bias: Array1::zeros(state_dim),
            w_uv,
            w_uh,
            w_vu,
            w_uu,
            u0,
        }
    }

    /// All parameters zero except `u_0 = 0.5`.
    pub fn zeros(n_visible: usize, n_hidden: usize, state_dim: usize) -> Self {
        Self {
            rbm: Rbm::zeros(n_visible, n_hidden),
            u_bias: Array1::zeros(state_dim),
            w_uv: Array2::zeros((n_visible, state_dim)),
            w_uh: Array2::zeros((n_hidden, state_dim)),
            w_vu: Array2::zeros((state_dim, n_visible)),
            w_uu: Array2::zeros((state_dim, state_dim)),
            u0: Array1::from_elem(state_dim, 0.5),
        }
    }

    pub fn n_visible(&self) -> usize {
        self.rbm.n_visible()
    }

    pub fn n_hidden(&self) -> usize {
        self.rbm.n_hidden()
    }

    pub fn state_dim(&self) -> usize {
        self.u_bias.len()
    }

    /// Checks every dimension relation and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (ni, nj, k) = (self.n_visible(), self.n_hidden(), self.state_dim());
        check_dim("weight rows", ni, self.rbm.w.nrows())?;
        check_dim("weight columns", nj, self.rbm.w.ncols())?;
        check_dim("W_uv rows", ni, self.w_uv.nrows())?;
        check_dim("W_uv columns", k, self.w_uv.ncols())?;
        check_dim("W_uh rows", nj, self.w_uh.nrows())?;
        check_dim("W_uh columns", k, self.w_uh.ncols())?;
        check_dim("W_vu rows", k, self.w_vu.nrows())?;
        check_dim("W_vu columns", ni, self.w_vu.ncols())?;
        check_dim("W_uu rows", k, self.w_uu.nrows())?;
        check_dim("W_uu columns", k, self.w_uu.ncols())?;
        check_dim("u0", k, self.u0.len())?;
        self.check_finite()
    }

    pub fn check_finite(&self) -> Result<()> {
        self.rbm.check_finite()?;
        let rest = self
            .u_bias
            .iter()
            .chain(&self.w_uv)
            .chain(&self.w_uh)
            .chain(&self.w_vu)
            .chain(&self.w_uu)
            .chain(&self.u0);
        for x in rest {
            if !x.is_finite() {
                return Err(Error::NonFinite("recurrent parameters".into()));
            }
        }
        Ok(())
    }

    fn check_sequence(&self, seq: ArrayView2<f64>) -> Result<()> {
        if seq.nrows() == 0 {
            return Err(Error::Empty("sequence"));
        }
        check_dim("visible", self.n_visible(), seq.ncols())
    }

    /// `(b + W_uv u_prev, c + W_uh u_prev)`.
    pub fn temporal_biases(&self, u_prev: ArrayView1<f64>) -> Result<(Array1<f64>, Array1<f64>)> {
        check_dim("state", self.state_dim(), u_prev.len())?;
        let b_t = &self.rbm.b + &self.w_uv.dot(&u_prev);
        let c_t = &self.rbm.c + &self.w_uh.dot(&u_prev);
        Ok((b_t, c_t))
    }

    /// `σ(u + W_uu u_prev + W_vu v_t)`.
    pub fn state_update(&self, u_prev: ArrayView1<f64>, v_t: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_dim("state", self.state_dim(), u_prev.len())?;
        check_dim("visible", self.n_visible(), v_t.len())?;
        Ok(self.state_update_unchecked(u_prev, v_t))
    }

    fn state_update_unchecked(&self, u_prev: ArrayView1<f64>, v_t: ArrayView1<f64>) -> Array1<f64> {
        let mut a = self.w_uu.dot(&u_prev);
        a += &self.w_vu.dot(&v_t);
        a += &self.u_bias;
        a.mapv_into(sigmoid)
    }

    /// State after consuming every frame of `prefix` (which may be empty).
    pub fn state_after(&self, prefix: ArrayView2<f64>) -> Result<Array1<f64>> {
        check_dim("visible", self.n_visible(), prefix.ncols())?;
        let mut u = self.u0.clone();
        for v in prefix.rows() {
            u = self.state_update_unchecked(u.view(), v);
        }
        Ok(u)
    }

    pub fn unroll(&self, seq: ArrayView2<f64>) -> Result<Unrolled> {
        self.check_sequence(seq)?;
        let t_len = seq.nrows();
        let mut u = Array2::zeros((t_len + 1, self.state_dim()));
        let mut b = Array2::zeros((t_len, self.n_visible()));
        let mut c = Array2::zeros((t_len, self.n_hidden()));
        u.row_mut(0).assign(&self.u0);
        for (t, v) in seq.rows().into_iter().enumerate() {
            let prev = u.row(t).to_owned();
            let (bt, ct) = self.temporal_biases(prev.view())?;
            b.row_mut(t).assign(&bt);
            c.row_mut(t).assign(&ct);
            let next = self.state_update_unchecked(prev.view(), v);
            u.row_mut(t + 1).assign(&next);
        }
        Ok(Unrolled { u, b, c })
    }

    fn frame_view<'a>(&'a self, unrolled: &'a Unrolled, t: usize) -> RbmView<'a> {
        RbmView {
            b: unrolled.b.row(t),
            c: unrolled.c.row(t),
            w: self.rbm.w.view(),
        }
    }

    /// `-Σ_t log p(v_t | b_t, c_t, W)` by exact enumeration.
    pub fn sequence_cost_exact(&self, seq: ArrayView2<f64>) -> Result<f64> {
        self.exact_guard()?;
        let un = self.unroll(seq)?;
        let mut cost = 0.0;
        for (t, v) in seq.rows().into_iter().enumerate() {
            let view = self.frame_view(&un, t);
            cost += view.free_energy(v) + view.log_partition()?;
        }
        Ok(cost)
    }

    fn exact_guard(&self) -> Result<()> {
        let needed = self.n_visible() + self.n_hidden();
        if needed > SEQUENCE_EXACT_UNIT_LIMIT {
            return Err(Error::Capacity {
                needed,
                limit: SEQUENCE_EXACT_UNIT_LIMIT,
            });
        }
        Ok(())
    }

    /// Accumulates `weight *` the BPTT gradient of one sequence into `acc`.
    fn accumulate_sequence(
        &self,
        acc: &mut RnnGradient,
        weight: f64,
        seq: ArrayView2<f64>,
        estimator: FrameEstimator,
        rng: &mut RngStream,
    ) -> Result<()> {
        let un = self.unroll(seq)?;
        let t_len = seq.nrows();
        let (ni, nj, k) = (self.n_visible(), self.n_hidden(), self.state_dim());
        let mut g_b = Array2::zeros((t_len, ni));
        let mut g_c = Array2::zeros((t_len, nj));

        for (t, v) in seq.rows().into_iter().enumerate() {
            let view = self.frame_view(&un, t);
            let mut frame = RbmGradient {
                db: Array1::zeros(ni),
                dc: Array1::zeros(nj),
                dw: std::mem::replace(&mut acc.rbm.dw, Array2::zeros((0, 0))),
            };
            match estimator {
                FrameEstimator::ContrastiveDivergence { k } => {
                    view.add_cd_estimate(&mut frame, weight, v, k, rng);
                }
                FrameEstimator::Exact => {
                    let moments = view.model_moments()?;
                    view.add_exact_gradient(&mut frame, weight, v, &moments);
                }
            }
            acc.rbm.dw = frame.dw;
            g_b.row_mut(t).assign(&frame.db);
            g_c.row_mut(t).assign(&frame.dc);
        }

        acc.rbm.db += &g_b.sum_axis(Axis(0));
        acc.rbm.dc += &g_c.sum_axis(Axis(0));

        let mut gu = Array1::<f64>::zeros(k);
        for t in (0..t_len).rev() {
            let u_prev = un.u.row(t);
            let u_t = un.u.row(t + 1);
            let gb = g_b.row(t);
            let gc = g_c.row(t);
            add_outer(&mut acc.dw_uv, 1.0, gb, u_prev);
            add_outer(&mut acc.dw_uh, 1.0, gc, u_prev);

            let delta = &gu * &u_t.mapv(|x| x * (1.0 - x));
            acc.du_bias += &delta;
            add_outer(&mut acc.dw_uu, 1.0, delta.view(), u_prev);
            add_outer(&mut acc.dw_vu, 1.0, delta.view(), seq.row(t));

            gu = self.w_uv.t().dot(&gb);
            gu += &self.w_uh.t().dot(&gc);
            gu += &self.w_uu.t().dot(&delta);
        }
        acc.du0 += &gu;
        Ok(())
    }

    /// Ascent gradient of the exact sequence log-likelihood (the negated
    /// gradient of [`RnnRbm::sequence_cost_exact`]), not normalised.
    pub fn exact_sequence_gradient(&self, seq: ArrayView2<f64>) -> Result<RnnGradient> {
        self.exact_guard()?;
        let mut acc = RnnGradient::zeros(self.n_visible(), self.n_hidden(), self.state_dim());
        let mut unused = RngStream::new(0);
        self.accumulate_sequence(&mut acc, 1.0, seq, FrameEstimator::Exact, &mut unused)?;
        Ok(acc)
    }

    /// BPTT gradient over a batch of whole sequences, normalised by the
    /// total number of frames. Sequences and frames are processed in order.
    pub fn bptt_gradients(
        &self,
        batch: &[ArrayView2<f64>],
        estimator: FrameEstimator,
        rng: &mut RngStream,
    ) -> Result<RnnGradient> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if let FrameEstimator::ContrastiveDivergence { k: 0 } = estimator {
            return Err(Error::Config("cd.k must be at least 1".into()));
        }
        let frames: usize = batch.iter().map(|s| s.nrows()).sum();
        let weight = 1.0 / frames.max(1) as f64;
        let mut acc = RnnGradient::zeros(self.n_visible(), self.n_hidden(), self.state_dim());
        for seq in batch {
            self.accumulate_sequence(&mut acc, weight, *seq, estimator, rng)?;
        }
        Ok(acc)
    }

    /// `θ += step * g`, keeping `u_0` inside `(0, 1)`.
    pub fn apply_gradient(&mut self, g: &RnnGradient, step: f64) -> Result<()> {
        check_dim("hidden", self.n_hidden(), g.dw_uh.nrows())?;
        check_dim("state", self.state_dim(), g.du_bias.len())?;
        self.rbm.apply_gradient(&g.rbm, step)?;
        self.u_bias.scaled_add(step, &g.du_bias);
        self.w_uv.scaled_add(step, &g.dw_uv);
        self.w_uh.scaled_add(step, &g.dw_uh);
        self.w_vu.scaled_add(step, &g.dw_vu);
        self.w_uu.scaled_add(step, &g.dw_uu);
        self.u0.scaled_add(step, &g.du0);
        self.u0.mapv_inplace(|x| x.clamp(U0_EPS, 1.0 - U0_EPS));
        Ok(())
    }

    /// `h_t = σ(c_t + v_tᵀ W)` for every frame.
    pub fn deterministic_hidden_sequence(&self, seq: ArrayView2<f64>) -> Result<Array2<f64>> {
        let un = self.unroll(seq)?;
        Ok(self.hidden_from_unrolled(seq, &un))
    }

    fn hidden_from_unrolled(&self, seq: ArrayView2<f64>, un: &Unrolled) -> Array2<f64> {
        let mut h = seq.dot(&self.rbm.w);
        h += &un.c;
        h.mapv_into(sigmoid)
    }

    /// Mean of `E(v_t, p(h|v_t))` under the per-step biases, summed over
    /// frames; returns `(sum, frame_count)`.
    pub fn data_energy_sum(&self, seq: ArrayView2<f64>) -> Result<(f64, usize)> {
        let un = self.unroll(seq)?;
        let h = self.hidden_from_unrolled(seq, &un);
        let mut total = 0.0;
        for t in 0..seq.nrows() {
            let v = seq.row(t);
            let ht = h.row(t);
            total += -un.b.row(t).dot(&v) - un.c.row(t).dot(&ht) - v.dot(&self.rbm.w.dot(&ht));
        }
        Ok((total, seq.nrows()))
    }

    pub(crate) fn mean_field(&self, b: ArrayView1<f64>, c: ArrayView1<f64>) -> Array1<f64> {
        let view = RbmView {
            b,
            c,
            w: self.rbm.w.view(),
        };
        let mut v = Array1::from_elem(self.n_visible(), 0.5);
        for _ in 0..MEAN_FIELD_PASSES {
            let h = view.hidden_probs(v.view());
            v = view.visible_probs(h.view());
        }
        v
    }

    /// Visible marginals for the frame after `prefix` (empty prefix uses `u_0`).
    pub fn predict_next(&self, prefix: ArrayView2<f64>) -> Result<Array1<f64>> {
        let u = self.state_after(prefix)?;
        Ok(self.predict_from_state(u.view()))
    }

    pub fn predict_from_state(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let b = &self.rbm.b + &self.w_uv.dot(&u);
        let c = &self.rbm.c + &self.w_uh.dot(&u);
        self.mean_field(b.view(), c.view())
    }

    /// Row `t` is the prediction of frame `t` from frames `0..t`, for
    /// `t = 1..T`; the result has `T - 1` rows.
    pub fn predict_sequence(&self, seq: ArrayView2<f64>) -> Result<Array2<f64>> {
        let un = self.unroll(seq)?;
        let t_len = seq.nrows();
        let mut out = Array2::zeros((t_len.saturating_sub(1), self.n_visible()));
        for t in 1..t_len {
            let p = self.mean_field(un.b.row(t), un.c.row(t));
            out.row_mut(t - 1).assign(&p);
        }
        Ok(out)
    }

    /// Autoregressive sampling: predict marginals, draw Bernoulli bits,
    /// feed the frame back through the state update.
    pub fn sample(&self, length: usize, rng: &mut RngStream) -> Array2<f64> {
        let mut out = Array2::zeros((length, self.n_visible()));
        let mut u = self.u0.clone();
        for t in 0..length {
            let p = self.predict_from_state(u.view());
            let v = sample_bernoulli(&p, rng);
            u = self.state_update_unchecked(u.view(), v.view());
            out.row_mut(t).assign(&v);
        }
        out
    }
}

impl HiddenLayer for RnnRbm {
    fn rbm(&self) -> &Rbm {
        &self.rbm
    }

    /// New rows of `W_uh` are fresh `N(0, 0.01²)` draws; `K` is unchanged.
    fn relayout_hidden(&mut self, layout: &[HiddenSource], noise_sd: f64, rng: &mut RngStream) {
        self.rbm.relayout_hidden_params(layout, noise_sd, rng);
        let k = self.state_dim();
        let mut w_uh = Array2::zeros((layout.len(), k));
        for (dst, src) in layout.iter().enumerate() {
            match *src {
                HiddenSource::Keep(j) => w_uh.row_mut(dst).assign(&self.w_uh.row(j)),
                HiddenSource::ChildOf(_) => {
                    w_uh.row_mut(dst).assign(&rng.normal_vec(k, INIT_WEIGHT_SD));
                }
            }
        }
        self.w_uh = w_uh;
    }
}

/// CD-k BPTT gradient (the training-time estimator).
pub fn bptt_gradients(
    model: &RnnRbm,
    batch: &[ArrayView2<f64>],
    cfg: &CdConfig,
    rng: &mut RngStream,
) -> Result<RnnGradient> {
    cfg.validate()?;
    model.bptt_gradients(batch, FrameEstimator::ContrastiveDivergence { k: cfg.k }, rng)
}

/// Frames of every sequence stacked into one matrix.
pub fn stack_frames(seqs: &[ArrayView2<f64>], n_visible: usize) -> Array2<f64> {
    let total: usize = seqs.iter().map(|s| s.nrows()).sum();
    let mut out = Array2::zeros((total, n_visible));
    let mut row = 0;
    for s in seqs {
        out.slice_mut(s![row..row + s.nrows(), ..]).assign(s);
        row += s.nrows();
    }
    out
}
