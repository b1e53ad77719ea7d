//! Deterministic, splittable randomness.
//!
//! Every stochastic operation in the crate takes an explicit seed or an
//! RNG derived here. Sub-streams are derived by mixing the master seed
//! with stream tags, so training step `t` draws from a generator that is
//! a pure function of `(seed, tags.., t)` — resuming a run mid-way
//! reproduces the exact sample sequence without serializing RNG state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates consecutive tag values.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent RNG stream from a master seed and a tag path.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut state = mix(seed ^ 0x5bf0_3635_16f5_63ab);
    for &t in tags {
        state = mix(state ^ mix(t));
    }
    ChaCha8Rng::seed_from_u64(state)
}

/// Stream tags for the independent randomness consumers.
pub mod stream {
    pub const TOY_CORPUS: u64 = 1;
    pub const MLR_RATES: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const LABEL_MASK: u64 = 4;
    pub const MODEL_INIT: u64 = 5;
    pub const BATCH: u64 = 6;
    pub const TWIN_RATES: u64 = 7;
    pub const PROBE: u64 = 8;
}

/// FNV-1a over bytes; used for config fingerprints, not security.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
