//! Seeded, splittable random streams.
//!
//! The generator is ChaCha20 (`rand_chacha::ChaCha20Rng`, value-stable across
//! releases). `Rng::new(seed)` keys it with `seed_from_u64(seed)` on stream 0;
//! [`Rng::substream`] selects a different ChaCha stream under the same key, so
//! substreams never overlap. Uniforms take the top 53 bits of a `u64`; normals
//! use the Box–Muller transform, consuming two uniforms per pair of draws.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::numcore::Tensor;
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha20Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream `id` under this generator's seed.
    ///
    /// Does not advance `self`. Stream 0 is the stream `Rng::new` starts on,
    /// so callers should use ids ≥ 1 for children.
    pub fn substream(&self, id: u64) -> Rng {
        let mut inner = ChaCha20Rng::seed_from_u64(self.seed);
        inner.set_stream(id);
        Rng {
            seed: self.seed,
            inner,
            spare_normal: None,
        }
    }

    /// Child generator seeded from this stream's next output.
    pub fn fork(&mut self) -> Rng {
        Rng::new(self.inner.next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        let n = n as u64;
        // rejection sampling removes modulo bias
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.inner.next_u64();
            if x < zone {
                return (x % n) as usize;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] keeps ln finite
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Tensor of i.i.d. `N(0, 1)` draws.
    pub fn normal_tensor<T: Scalar>(&mut self, shape: impl Into<Vec<usize>>) -> Tensor<T> {
        let mut t = Tensor::zeros(shape);
        for x in t.data_mut() {
            *x = T::lit(self.standard_normal());
        }
        t
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }
}

/// i.i.d. standard-normal tensor of the given shape.
pub fn sample_standard_normal<T: Scalar>(rng: &mut Rng, shape: impl Into<Vec<usize>>) -> Tensor<T> {
    rng.normal_tensor(shape)
}
