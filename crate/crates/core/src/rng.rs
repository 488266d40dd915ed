//! Deterministic random-stream derivation.
//!
//! Every stochastic component (augmentation draws, weight init, shuffles,
//! synthetic data) derives its own ChaCha8 stream from a [`StreamKey`], so
//! results do not depend on iteration or thread order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; good avalanche for combining seed material.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// FNV-1a over bytes; used to fold string ids into stream keys.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A derivable key identifying one random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey(pub u64);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(splitmix64(seed))
    }

    /// Derive a child key; children with distinct tags are independent.
    pub fn child(self, tag: u64) -> Self {
        StreamKey(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x51_7c_c1_b7))))
    }

    /// Derive a child keyed by a string (e.g. a patient or patch id).
    pub fn child_str(self, s: &str) -> Self {
        self.child(fnv1a64(s.as_bytes()))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Standard normal draw via Box-Muller (uses `libm`, works without std).
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            break u;
        }
    };
    let u2: f64 = rng.gen();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    if items.len() < 2 {
        return;
    }
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}
