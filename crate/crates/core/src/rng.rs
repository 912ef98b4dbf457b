//! Seeded random streams.
//!
//! Every stochastic task (one AIS run, one reverse chain, one CSL chain, one
//! CD training example) draws from its own Xoshiro256++ stream identified by
//! `(seed, stream)`. Results therefore depend only on the task's identity, not
//! on which worker executed it or in what order.

use rand::{Rng, RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const UNIT: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: Xoshiro256PlusPlus,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// Stream `stream` under `seed`, seeded from `derive_seed(seed, stream)`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        Self {
            seed,
            inner: Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, stream)),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw `k · 2^-53` on `[0, 1)`, `k` the top 53 bits of one output.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * UNIT
    }

    /// The 53-bit integer behind the next [`Self::uniform`] draw.
    #[inline]
    pub fn uniform_bits(&mut self) -> u64 {
        self.inner.next_u64() >> 11
    }

    /// One Bernoulli draw, consuming exactly one uniform: `1` iff `u < p`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> u8 {
        (self.uniform() < p) as u8
    }

    /// Uniform integer in `0..n`.
    #[inline]
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Child seed for sub-task `index` of `seed` (SplitMix64 finalizer over both).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
