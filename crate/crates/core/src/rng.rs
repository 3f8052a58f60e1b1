//! Reproducible random streams.
//!
//! Every stochastic routine takes an explicit `&mut Stream`. Streams are
//! ChaCha8 instances keyed by a 64-bit seed and a 64-bit stream id, so the
//! generator for trajectory `k` of an ensemble is `stream(seed, k)` no matter
//! which thread runs it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Stream-id namespaces for auxiliary draws that must not collide with
/// per-trajectory streams.
pub mod tag {
    pub const EQUILIBRIUM_REFERENCE: u64 = 0x5245_4645_5245_4e43;
    pub const EQUILIBRIUM_BASELINE: u64 = 0x4241_5345_4c49_4e45;
    pub const MINORIZATION: u64 = 0x4d49_4e4f_5249_5a45;
}

pub fn stream(seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer applied to `seed ^ tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = (seed ^ tag).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
