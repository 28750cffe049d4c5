//! Portable SplitMix64 generator.
//!
//! Every random decision in the crate (graph generation, rollouts, batching,
//! initialization, k-means++ seeding) is driven by this generator so that
//! results are reproducible bit-for-bit across platforms and across
//! implementations in other languages.

use serde::{Deserialize, Serialize};

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
const TWO_POW_NEG_64: f64 = 1.0 / 18_446_744_073_709_551_616.0;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The `index`-th output (0-based) of a SplitMix64 stream seeded with `seed`.
///
/// Used to derive independent sub-seeds (per rollout, per trial, ...) in O(1)
/// without consuming a shared stream, so derived work can run in any order.
#[inline]
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        mix(self.state)
    }

    /// Uniform draw in [0, 1): the raw 64-bit output divided by 2^64.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        let u = self.next_u64() as f64 * TWO_POW_NEG_64;
        // u64 -> f64 rounds up to 2^64 for the top 2^10 outputs.
        if u < 1.0 {
            u
        } else {
            1.0 - f64::EPSILON / 2.0
        }
    }

    /// Bernoulli trial: true with probability `p`.
    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Uniform integer in `[0, bound)` by Lemire's multiply-and-reject.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "below(0)");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = (self.next_u64() as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    /// Uniform draw in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Fisher-Yates shuffle, iterating from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
