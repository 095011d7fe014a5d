//! Seeded, splittable random stream used everywhere randomness is needed.
//!
//! The generator is SplitMix64 (64-bit state, increment `0x9e3779b97f4a7c15`,
//! finalizer multipliers `0xbf58476d1ce4e5b9` and `0x94d049bb133111eb`), with
//! the initial state equal to the seed. Derived quantities are defined so that
//! another implementation can reproduce every stream bit for bit:
//!
//! * `uniform()` = `(next_u64() >> 11) as f64 * 2^-53`, in `[0, 1)`.
//! * `split()` = a new generator seeded with `next_u64()` of the parent.
//! * `below(n)` = `floor(uniform() * n)`.
//! * `shuffle` is a Fisher–Yates pass from the last index down, swapping
//!   index `i` with `below(i + 1)`.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    inner: SplitMix64,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }

    pub fn split(&mut self) -> Stream {
        Stream::new(self.next_u64())
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Raw state, for checkpointing.
    pub fn state(&self) -> u64 {
        u64::from_le_bytes(self.inner.state())
    }
}

/// Stateless 64-bit hash (the SplitMix64 finalizer), used for procedural noise.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}
