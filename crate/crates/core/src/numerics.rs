//! Random streams, nonlinearities and Bernoulli sampling shared by every model.

use ndarray::{Array1, Array2, ArrayBase, Data, Dimension};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

/// Identifier of the generator behind [`RngStream`], recorded in checkpoints.
pub const RNG_ALGORITHM: &str = "chacha20-stream-v1";

/// Largest and smallest values [`sigmoid`] returns.
const SIGMOID_HI: f64 = 1.0 - f64::EPSILON / 2.0;
const SIGMOID_LO: f64 = f64::EPSILON / 2.0;

/// A seeded, splittable ChaCha20 stream.
///
/// A stream is identified by its seed plus a stream id; children created with
/// [`RngStream::split`] get ids that depend only on the parent id and the split
/// index, so any run keyed by a seed can be reconstructed piecewise.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha20Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Child stream for `index`. Does not advance `self`.
    pub fn split(&self, index: u64) -> RngStream {
        let child = splitmix64(self.stream ^ splitmix64(index.wrapping_add(1)));
        Self::with_stream(self.seed, child)
    }

    /// Uniform sample in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal(&mut self, sd: f64) -> f64 {
        if sd == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, sd)
            .expect("standard deviation must be finite and non-negative")
            .sample(&mut self.rng)
    }

    pub fn normal_vec(&mut self, len: usize, sd: f64) -> Array1<f64> {
        Array1::from_shape_simple_fn(len, || self.normal(sd))
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, sd: f64) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || self.normal(sd))
    }

    /// Fisher-Yates permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.rng.random_range(0..=i);
            idx.swap(i, j);
        }
        idx
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Logistic function, clamped so the result is strictly inside `(0, 1)`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    debug_assert!(!x.is_nan(), "sigmoid of NaN");
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(SIGMOID_LO, SIGMOID_HI)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid_inplace<S, D>(a: &mut ArrayBase<S, D>)
where
    S: ndarray::DataMut<Elem = f64>,
    D: Dimension,
{
    a.mapv_inplace(sigmoid);
}

/// One Bernoulli draw per probability, consuming exactly one uniform each.
pub fn sample_bernoulli<S, D>(p: &ArrayBase<S, D>, rng: &mut RngStream) -> ndarray::Array<f64, D>
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    p.map(|&pi| {
        debug_assert!((0.0..=1.0).contains(&pi), "probability {pi} outside [0,1]");
        if rng.uniform() < pi {
            1.0
        } else {
            0.0
        }
    })
}

/// Numerically stable `log Σ exp(x)`.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Bits of `state` as a 0/1 vector of length `n`, least significant bit first.
pub fn bits_of(state: u64, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |i| ((state >> i) & 1) as f64)
}
