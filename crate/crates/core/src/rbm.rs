//! Binary restricted Boltzmann machine: energy, exact enumeration for small
//! models, conditionals and contrastive-divergence gradient estimates.
//!
//! Every gradient record in this crate is an *ascent* direction on the data
//! log-likelihood; an SGD step is `θ += learning_rate * g`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{bits_of, log_sum_exp, sample_bernoulli, sigmoid, softplus, RngStream};

/// Largest `I + J` accepted by the exact enumeration routines.
pub const EXACT_UNIT_LIMIT: usize = 24;

/// Standard deviation of freshly initialised weights.
pub const INIT_WEIGHT_SD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Rbm {
    /// Visible bias, length `I`.
    pub b: Array1<f64>,
    /// Hidden bias, length `J`.
    pub c: Array1<f64>,
    /// Weights, `I x J`.
    pub w: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdConfig {
    /// Gibbs steps per estimate.
    pub k: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for CdConfig {
    fn default() -> Self {
        Self {
            k: 1,
            learning_rate: 0.01,
            batch_size: 100,
        }
    }
}

impl CdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("cd.k must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Gradient with respect to `(b, c, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGradient {
    pub db: Array1<f64>,
    pub dc: Array1<f64>,
    pub dw: Array2<f64>,
}

impl RbmGradient {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            db: Array1::zeros(n_visible),
            dc: Array1::zeros(n_hidden),
            dw: Array2::zeros((n_visible, n_hidden)),
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.db *= s;
        self.dc *= s;
        self.dw *= s;
    }

    pub fn add_assign(&mut self, other: &RbmGradient) {
        self.db += &other.db;
        self.dc += &other.dc;
        self.dw += &other.dw;
    }

    pub fn sq_norm(&self) -> f64 {
        self.db.iter().chain(&self.dc).chain(&self.dw).map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.sq_norm().sqrt()
    }
}

/// Borrowed `(b, c, W)` triple. Lets recurrent models reuse the RBM kernels
/// with time-dependent biases without building a temporary [`Rbm`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct RbmView<'a> {
    pub b: ArrayView1<'a, f64>,
    pub c: ArrayView1<'a, f64>,
    pub w: ArrayView2<'a, f64>,
}

impl<'a> RbmView<'a> {
    pub fn n_visible(&self) -> usize {
        self.b.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.c.len()
    }

    pub fn hidden_probs(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let mut a = v.dot(&self.w);
        a += &self.c;
        a.mapv_into(sigmoid)
    }

    pub fn visible_probs(&self, h: ArrayView1<f64>) -> Array1<f64> {
        let mut a = self.w.dot(&h);
        a += &self.b;
        a.mapv_into(sigmoid)
    }

    /// `-log Σ_h exp(-E(v, h))`.
    pub fn free_energy(&self, v: ArrayView1<f64>) -> f64 {
        let pre = v.dot(&self.w) + self.c;
        -self.b.dot(&v) - pre.iter().map(|&x| softplus(x)).sum::<f64>()
    }

    /// `-log Σ_v exp(-E(v, h))`.
    fn free_energy_hidden(&self, h: ArrayView1<f64>) -> f64 {
        let pre = self.w.dot(&h) + self.b;
        -self.c.dot(&h) - pre.iter().map(|&x| softplus(x)).sum::<f64>()
    }

    fn guard(&self) -> Result<()> {
        let needed = self.n_visible() + self.n_hidden();
        if needed > EXACT_UNIT_LIMIT {
            return Err(Error::Capacity {
                needed,
                limit: EXACT_UNIT_LIMIT,
            });
        }
        Ok(())
    }

    /// Sums out the larger layer analytically and enumerates the smaller one.
    pub fn log_partition(&self) -> Result<f64> {
        self.guard()?;
        let (i, j) = (self.n_visible(), self.n_hidden());
        Ok(if i <= j {
            log_sum_exp((0..1u64 << i).map(|s| -self.free_energy(bits_of(s, i).view())))
        } else {
            log_sum_exp((0..1u64 << j).map(|s| -self.free_energy_hidden(bits_of(s, j).view())))
        })
    }

    /// Model expectations `E[v]`, `E[p(h|v)]`, `E[v p(h|v)ᵀ]` by enumeration.
    pub fn model_moments(&self) -> Result<RbmGradient> {
        self.guard()?;
        let (ni, nj) = (self.n_visible(), self.n_hidden());
        let log_z = self.log_partition()?;
        let mut m = RbmGradient::zeros(ni, nj);
        if ni <= nj {
            for s in 0..1u64 << ni {
                let v = bits_of(s, ni);
                let p = (-self.free_energy(v.view()) - log_z).exp();
                let ph = self.hidden_probs(v.view());
                m.db.scaled_add(p, &v);
                m.dc.scaled_add(p, &ph);
                add_outer(&mut m.dw, p, v.view(), ph.view());
            }
        } else {
            for s in 0..1u64 << nj {
                let h = bits_of(s, nj);
                let p = (-self.free_energy_hidden(h.view()) - log_z).exp();
                let pv = self.visible_probs(h.view());
                m.db.scaled_add(p, &pv);
                m.dc.scaled_add(p, &h);
                add_outer(&mut m.dw, p, pv.view(), h.view());
            }
        }
        Ok(m)
    }

    /// Data-dependent statistics of one visible vector: `(v, p(h|v), v p(h|v)ᵀ)`.
    pub fn add_data_moments(&self, acc: &mut RbmGradient, weight: f64, v: ArrayView1<f64>) {
        let ph = self.hidden_probs(v);
        acc.db.scaled_add(weight, &v);
        acc.dc.scaled_add(weight, &ph);
        add_outer(&mut acc.dw, weight, v, ph.view());
    }

    /// Adds `weight *` the CD-k estimate for one visible vector to `acc`.
    ///
    /// Gibbs transitions use sampled states; the statistics use hidden
    /// probabilities and the final sampled visible state.
    pub fn add_cd_estimate(
        &self,
        acc: &mut RbmGradient,
        weight: f64,
        v0: ArrayView1<f64>,
        k: usize,
        rng: &mut RngStream,
    ) {
        let ph0 = self.hidden_probs(v0);
        let mut h = sample_bernoulli(&ph0, rng);
        let mut vk = Array1::zeros(0);
        let mut phk = Array1::zeros(0);
        for step in 0..k {
            let pv = self.visible_probs(h.view());
            vk = sample_bernoulli(&pv, rng);
            phk = self.hidden_probs(vk.view());
            if step + 1 < k {
                h = sample_bernoulli(&phk, rng);
            }
        }
        acc.db.scaled_add(weight, &v0);
        acc.db.scaled_add(-weight, &vk);
        acc.dc.scaled_add(weight, &ph0);
        acc.dc.scaled_add(-weight, &phk);
        add_outer(&mut acc.dw, weight, v0, ph0.view());
        add_outer(&mut acc.dw, -weight, vk.view(), phk.view());
    }

    /// Exact gradient of `log p(v)` for one vector, added with `weight`.
    /// `moments` must come from [`RbmView::model_moments`] of the same view.
    pub fn add_exact_gradient(
        &self,
        acc: &mut RbmGradient,
        weight: f64,
        v: ArrayView1<f64>,
        moments: &RbmGradient,
    ) {
        self.add_data_moments(acc, weight, v);
        acc.db.scaled_add(-weight, &moments.db);
        acc.dc.scaled_add(-weight, &moments.dc);
        acc.dw.scaled_add(-weight, &moments.dw);
    }
}

pub(crate) fn add_outer(acc: &mut Array2<f64>, weight: f64, a: ArrayView1<f64>, b: ArrayView1<f64>) {
    for (mut row, &ai) in acc.rows_mut().into_iter().zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(weight * ai, &b);
        }
    }
}

impl Rbm {
    /// Zero biases and `N(0, 0.01²)` weights.
    pub fn new(n_visible: usize, n_hidden: usize, rng: &mut RngStream) -> Self {
        Self {
            b: Array1::zeros(n_visible),
            c: Array1::zeros(n_hidden),
            w: rng.normal_matrix(n_visible, n_hidden, INIT_WEIGHT_SD),
        }
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Self {
        Self {
            b: Array1::zeros(n_visible),
            c: Array1::zeros(n_hidden),
            w: Array2::zeros((n_visible, n_hidden)),
        }
    }

    pub fn from_parts(b: Array1<f64>, c: Array1<f64>, w: Array2<f64>) -> Result<Self> {
        check_dim("weight rows", b.len(), w.nrows())?;
        check_dim("weight columns", c.len(), w.ncols())?;
        let rbm = Self { b, c, w };
        rbm.check_finite()?;
        Ok(rbm)
    }

    pub fn n_visible(&self) -> usize {
        self.b.len()
    }

    pub fn n_hidden(&self) -> usize {
        self.c.len()
    }

    pub(crate) fn view(&self) -> RbmView<'_> {
        RbmView {
            b: self.b.view(),
            c: self.c.view(),
            w: self.w.view(),
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.b.iter().chain(&self.c).chain(&self.w).all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("rbm parameters".into()))
        }
    }

    fn check_visible(&self, v: ArrayView1<f64>) -> Result<()> {
        check_dim("visible", self.n_visible(), v.len())
    }

    fn check_hidden(&self, h: ArrayView1<f64>) -> Result<()> {
        check_dim("hidden", self.n_hidden(), h.len())
    }

    fn check_batch(&self, batch: ArrayView2<f64>) -> Result<()> {
        if batch.nrows() == 0 {
            return Err(Error::Empty("batch"));
        }
        check_dim("visible", self.n_visible(), batch.ncols())
    }

    /// `E(v, h) = -b·v - c·h - vᵀ W h`.
    pub fn energy(&self, v: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64> {
        self.check_visible(v)?;
        self.check_hidden(h)?;
        Ok(-self.b.dot(&v) - self.c.dot(&h) - v.dot(&self.w.dot(&h)))
    }

    pub fn free_energy(&self, v: ArrayView1<f64>) -> Result<f64> {
        self.check_visible(v)?;
        Ok(self.view().free_energy(v))
    }

    pub fn log_partition_function_exact(&self) -> Result<f64> {
        self.view().log_partition()
    }

    pub fn partition_function_exact(&self) -> Result<f64> {
        Ok(self.log_partition_function_exact()?.exp())
    }

    pub fn prob_exact(&self, v: ArrayView1<f64>, h: ArrayView1<f64>) -> Result<f64> {
        let e = self.energy(v, h)?;
        Ok((-e - self.log_partition_function_exact()?).exp())
    }

    /// `log p(v)` with the hidden layer summed out.
    pub fn log_prob_visible_exact(&self, v: ArrayView1<f64>) -> Result<f64> {
        let f = self.free_energy(v)?;
        Ok(-f - self.log_partition_function_exact()?)
    }

    pub fn mean_log_likelihood_exact(&self, batch: ArrayView2<f64>) -> Result<f64> {
        self.check_batch(batch)?;
        let log_z = self.log_partition_function_exact()?;
        let view = self.view();
        let total: f64 = batch.rows().into_iter().map(|v| -view.free_energy(v) - log_z).sum();
        Ok(total / batch.nrows() as f64)
    }

    /// `p(h_j = 1 | v)` for every hidden unit.
    pub fn hidden_conditional(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_visible(v)?;
        Ok(self.view().hidden_probs(v))
    }

    /// `p(v_i = 1 | h)` for every visible unit.
    pub fn visible_conditional(&self, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.check_hidden(h)?;
        Ok(self.view().visible_probs(h))
    }

    /// Row-wise [`Rbm::hidden_conditional`].
    pub fn hidden_conditional_batch(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("visible", self.n_visible(), batch.ncols())?;
        let mut a = batch.dot(&self.w);
        a += &self.c.view().insert_axis(Axis(0));
        Ok(a.mapv_into(sigmoid))
    }

    pub fn visible_conditional_batch(&self, hidden: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_dim("hidden", self.n_hidden(), hidden.ncols())?;
        let mut a = hidden.dot(&self.w.t());
        a += &self.b.view().insert_axis(Axis(0));
        Ok(a.mapv_into(sigmoid))
    }

    /// CD-k gradient estimate averaged over the rows of `batch`. Does not
    /// mutate the model. Rows are processed in order, each consuming the
    /// stream in turn.
    pub fn cd_step(
        &self,
        batch: ArrayView2<f64>,
        cfg: &CdConfig,
        rng: &mut RngStream,
    ) -> Result<RbmGradient> {
        cfg.validate()?;
        self.check_batch(batch)?;
        let view = self.view();
        let mut g = RbmGradient::zeros(self.n_visible(), self.n_hidden());
        let weight = 1.0 / batch.nrows() as f64;
        for v in batch.rows() {
            view.add_cd_estimate(&mut g, weight, v, cfg.k, rng);
        }
        Ok(g)
    }

    /// Exact gradient of the mean log-likelihood of `batch`.
    pub fn log_likelihood_gradient_exact(&self, batch: ArrayView2<f64>) -> Result<RbmGradient> {
        self.check_batch(batch)?;
        let view = self.view();
        let moments = view.model_moments()?;
        let mut g = RbmGradient::zeros(self.n_visible(), self.n_hidden());
        let weight = 1.0 / batch.nrows() as f64;
        for v in batch.rows() {
            view.add_data_moments(&mut g, weight, v);
        }
        g.db -= &moments.db;
        g.dc -= &moments.dc;
        g.dw -= &moments.dw;
        Ok(g)
    }

    /// Mean of `E(v, p(h|v))` over the rows; equals the expected energy
    /// under `p(h|v)` because the energy is linear in `h`.
    pub fn mean_data_energy(&self, batch: ArrayView2<f64>) -> Result<f64> {
        self.check_batch(batch)?;
        let ph = self.hidden_conditional_batch(batch)?;
        let mut total = 0.0;
        for (v, h) in batch.rows().into_iter().zip(ph.rows()) {
            total += -self.b.dot(&v) - self.c.dot(&h) - v.dot(&self.w.dot(&h));
        }
        Ok(total / batch.nrows() as f64)
    }

    /// Mean binary cross-entropy per unit of the one-pass reconstruction
    /// `v -> p(h|v) -> p(v|h)`.
    pub fn reconstruction_error(&self, batch: ArrayView2<f64>) -> Result<f64> {
        self.check_batch(batch)?;
        let ph = self.hidden_conditional_batch(batch)?;
        let pv = self.visible_conditional_batch(ph.view())?;
        Ok(crate::metrics::cross_entropy(pv.view(), batch))
    }

    /// `θ += step * g`.
    pub fn apply_gradient(&mut self, g: &RbmGradient, step: f64) -> Result<()> {
        check_dim("visible", self.n_visible(), g.db.len())?;
        check_dim("hidden", self.n_hidden(), g.dc.len())?;
        self.b.scaled_add(step, &g.db);
        self.c.scaled_add(step, &g.dc);
        self.w.scaled_add(step, &g.dw);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_rbm(ni: usize, nj: usize, scale: f64, rng: &mut RngStream) -> Rbm {
        Rbm {
            b: rng.normal_vec(ni, scale),
            c: rng.normal_vec(nj, scale),
            w: rng.normal_matrix(ni, nj, scale),
        }
    }

    /// Independent double loop over every (v, h) pair.
    fn brute_force_z(rbm: &Rbm) -> f64 {
        let (ni, nj) = (rbm.n_visible(), rbm.n_hidden());
        let mut z = 0.0;
        for sv in 0..1u64 << ni {
            for sh in 0..1u64 << nj {
                let v = bits_of(sv, ni);
                let h = bits_of(sh, nj);
                let mut e = 0.0;
                for i in 0..ni {
                    e -= rbm.b[i] * v[i];
                    for j in 0..nj {
                        e -= v[i] * rbm.w[[i, j]] * h[j];
                    }
                }
                for j in 0..nj {
                    e -= rbm.c[j] * h[j];
                }
                z += (-e).exp();
            }
        }
        z
    }

    #[test]
    fn energy_examples() {
        let zero = Rbm::zeros(3, 2);
        assert_eq!(zero.energy(array![1.0, 0.0, 1.0].view(), array![1.0, 1.0].view()).unwrap(), 0.0);

        let rbm = Rbm::from_parts(array![0.5], array![-0.25], array![[0.1]]).unwrap();
        let e = rbm.energy(array![1.0].view(), array![1.0].view()).unwrap();
        assert!((e - (-0.35)).abs() < 1e-15);

        let mut rng = RngStream::new(2);
        let r = random_rbm(3, 2, 1.0, &mut rng);
        let h = array![1.0, 0.0];
        let e = r.energy(Array1::zeros(3).view(), h.view()).unwrap();
        assert!((e + r.c.dot(&h)).abs() < 1e-15);
    }

    #[test]
    fn energy_dimension_mismatch_names_axis() {
        let rbm = Rbm::zeros(3, 2);
        let err = rbm.energy(array![1.0, 0.0].view(), array![1.0, 1.0].view()).unwrap_err();
        match err {
            Error::DimensionMismatch { axis, expected, found } => {
                assert_eq!((axis, expected, found), ("visible", 3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = rbm.energy(array![1.0, 0.0, 0.0].view(), array![1.0].view()).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { axis: "hidden", .. }));
    }

    #[test]
    fn partition_function_examples() {
        assert!((Rbm::zeros(1, 1).partition_function_exact().unwrap() - 4.0).abs() < 1e-12);
        assert!((Rbm::zeros(2, 0).partition_function_exact().unwrap() - 4.0).abs() < 1e-12);
        let mut rng = RngStream::new(11);
        for (ni, nj) in [(2, 2), (3, 1), (1, 4), (4, 3)] {
            let rbm = random_rbm(ni, nj, 0.8, &mut rng);
            let z = rbm.partition_function_exact().unwrap();
            let oracle = brute_force_z(&rbm);
            assert!(((z - oracle) / oracle).abs() < 1e-12, "{ni}x{nj}: {z} vs {oracle}");
        }
    }

    #[test]
    fn partition_guard() {
        let rbm = Rbm::zeros(13, 12);
        assert!(matches!(
            rbm.partition_function_exact(),
            Err(Error::Capacity { needed: 25, limit: 24 })
        ));
    }

    #[test]
    fn prob_exact_uniform_and_normalized() {
        let zero = Rbm::zeros(1, 1);
        for s in 0..4u64 {
            let p = zero.prob_exact(bits_of(s & 1, 1).view(), bits_of(s >> 1, 1).view()).unwrap();
            assert!((p - 0.25).abs() < 1e-15);
        }
        let mut rng = RngStream::new(5);
        let rbm = random_rbm(3, 3, 1.0, &mut rng);
        let z = brute_force_z(&rbm);
        let mut total = 0.0;
        for sv in 0..8 {
            for sh in 0..8 {
                let (v, h) = (bits_of(sv, 3), bits_of(sh, 3));
                let p = rbm.prob_exact(v.view(), h.view()).unwrap();
                let e = rbm.energy(v.view(), h.view()).unwrap();
                assert!((p - (-e).exp() / z).abs() < 1e-12);
                total += p;
            }
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conditionals_simple_cases() {
        let zero = Rbm::zeros(3, 2);
        assert_eq!(zero.hidden_conditional(array![1.0, 0.0, 1.0].view()).unwrap(), array![0.5, 0.5]);
        assert_eq!(zero.visible_conditional(array![1.0, 1.0].view()).unwrap(), array![0.5, 0.5, 0.5]);

        let mut rng = RngStream::new(9);
        let mut rbm = random_rbm(3, 2, 1.0, &mut rng);
        rbm.w.column_mut(1).fill(0.0);
        let ph = rbm.hidden_conditional(array![1.0, 1.0, 0.0].view()).unwrap();
        assert_eq!(ph[1], sigmoid(rbm.c[1]));
        let pv = rbm.visible_conditional(array![0.0, 0.0].view()).unwrap();
        assert_eq!(pv, rbm.b.mapv(sigmoid));
    }

    #[test]
    fn cd_step_rejects_empty_batch_and_is_deterministic() {
        let mut rng = RngStream::new(1);
        let rbm = random_rbm(4, 3, 0.5, &mut rng);
        let empty = Array2::<f64>::zeros((0, 4));
        let cfg = CdConfig::default();
        assert!(matches!(rbm.cd_step(empty.view(), &cfg, &mut rng), Err(Error::Empty("batch"))));

        let batch = array![[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 1.0, 1.0]];
        let cfg = CdConfig { k: 3, ..CdConfig::default() };
        let g1 = rbm.cd_step(batch.view(), &cfg, &mut RngStream::new(77)).unwrap();
        let g2 = rbm.cd_step(batch.view(), &cfg, &mut RngStream::new(77)).unwrap();
        assert_eq!(g1, g2);
    }

    #[test]
    fn cd_bias_gradient_vanishes_at_marginal_fixed_point() {
        // W = 0 decouples the layers; b = logit(data marginal) is the fixed point.
        let n = 10_000;
        let marg = [0.2, 0.5, 0.7];
        let batch = Array2::from_shape_fn((n, 3), |(r, i)| {
            if (r as f64) < marg[i] * n as f64 { 1.0 } else { 0.0 }
        });
        let b = marg.iter().map(|&m: &f64| (m / (1.0 - m)).ln()).collect();
        let rbm = Rbm::from_parts(b, Array1::zeros(2), Array2::zeros((3, 2))).unwrap();
        for k in [1, 5] {
            let cfg = CdConfig { k, ..CdConfig::default() };
            let g = rbm.cd_step(batch.view(), &cfg, &mut RngStream::new(3)).unwrap();
            for &x in &g.db {
                assert!(x.abs() < 0.02, "k={k} db={x}");
            }
        }
    }

    #[test]
    fn exact_gradient_zero_model_zero_data() {
        let rbm = Rbm::zeros(3, 2);
        let batch = Array2::zeros((4, 3));
        let g = rbm.log_likelihood_gradient_exact(batch.view()).unwrap();
        for &x in &g.db {
            assert!((x + 0.5).abs() < 1e-12);
        }
        // p(h|v) = 0.5 for every v, so the data and model terms cancel.
        for &x in &g.dc {
            assert!(x.abs() < 1e-12);
        }
    }

    #[test]
    fn both_enumeration_sides_agree() {
        let mut rng = RngStream::new(13);
        let a = random_rbm(2, 5, 0.7, &mut rng);
        let t = Rbm { b: a.c.clone(), c: a.b.clone(), w: a.w.t().to_owned() };
        let la = a.log_partition_function_exact().unwrap();
        let lt = t.log_partition_function_exact().unwrap();
        assert!((la - lt).abs() < 1e-12);
        let ma = a.view().model_moments().unwrap();
        let mt = t.view().model_moments().unwrap();
        // E[v p(h|v)] = E[v h] regardless of which side is enumerated.
        for i in 0..2 {
            for j in 0..5 {
                assert!((ma.dw[[i, j]] - mt.dw[[j, i]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_data_energy_zero_model() {
        let rbm = Rbm::zeros(3, 2);
        let batch = array![[1.0, 0.0, 1.0]];
        assert_eq!(rbm.mean_data_energy(batch.view()).unwrap(), 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn exact_joint_sums_to_one(seed in any::<u64>(), ni in 1usize..5, nj in 1usize..4) {
                let rbm = random_rbm(ni, nj, 1.5, &mut RngStream::new(seed));
                let mut total = 0.0;
                for sv in 0..(1u64 << ni) {
                    total += rbm.log_prob_visible_exact(bits_of(sv, ni).view()).unwrap().exp();
                }
                prop_assert!((total - 1.0).abs() < 1e-12);
            }

            #[test]
            fn conditionals_are_probabilities(seed in any::<u64>(), ni in 1usize..6, nj in 1usize..6) {
                let mut rng = RngStream::new(seed);
                let rbm = random_rbm(ni, nj, 3.0, &mut rng);
                let v = bits_of(seed % (1 << ni), ni);
                let h = rbm.hidden_conditional(v.view()).unwrap();
                let back = rbm.visible_conditional(h.view()).unwrap();
                prop_assert!(h.iter().chain(back.iter()).all(|p| (0.0..=1.0).contains(p)));
            }

            #[test]
            fn free_energy_marginalizes_energy(seed in any::<u64>(), ni in 1usize..4, nj in 1usize..4) {
                let rbm = random_rbm(ni, nj, 1.0, &mut RngStream::new(seed));
                let v = bits_of(seed % (1 << ni), ni);
                let energies = (0..(1u64 << nj)).map(|sh| -rbm.energy(v.view(), bits_of(sh, nj).view()).unwrap());
                let f = -crate::numerics::log_sum_exp(energies);
                prop_assert!((rbm.free_energy(v.view()).unwrap() - f).abs() < 1e-10);
            }

            #[test]
            fn zero_step_leaves_parameters(seed in any::<u64>(), ni in 1usize..5, nj in 1usize..4) {
                let mut rng = RngStream::new(seed);
                let rbm = random_rbm(ni, nj, 1.0, &mut rng);
                let data = Array2::from_shape_fn((3, ni), |_| (rng.uniform() < 0.5) as u8 as f64);
                let g = rbm.log_likelihood_gradient_exact(data.view()).unwrap();
                let mut moved = rbm.clone();
                moved.apply_gradient(&g, 0.0).unwrap();
                prop_assert_eq!(moved, rbm);
            }
        }
    }
}
