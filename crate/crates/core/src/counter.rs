//! Stateless Gaussian variates keyed by `(seed, index)`.
//!
//! The uniform source is the SplitMix64 output function evaluated at counter
//! `index`; the normal transform is the inverse CDF, so each variate costs one
//! hash and one quantile evaluation and depends on nothing but its key.

use crate::special::normal_quantile;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform in the open interval (0, 1), with 53 bits of resolution.
#[inline]
pub fn uniform_at(key: u64, index: u64) -> f64 {
    let bits = mix64(key.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)));
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Centered normal variates of fixed standard deviation indexed by a counter.
#[derive(Clone, Copy, Debug)]
pub struct GaussianStream {
    key: u64,
    stddev: f64,
}

impl GaussianStream {
    pub fn new(seed: u64, stddev: f64) -> Self {
        GaussianStream { key: mix64(seed ^ 0x6A09_E667_F3BC_C908), stddev }
    }

    #[inline]
    pub fn at(&self, index: u64) -> f64 {
        self.stddev * normal_quantile(uniform_at(self.key, index))
    }
}

/// Derives the `index`-th child seed of `master`: `mix64(mix64(master) + (index + 1) * gamma)`.
pub fn split_seed(master: u64, index: u64) -> u64 {
    mix64(mix64(master).wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}
