//! Deterministic seed derivation.
//!
//! Every random quantity in the lab is drawn from a ChaCha8 stream whose seed
//! is derived from the experiment master seed by counter-mode hashing:
//! `derive(master, &[stream_tag, index...])`. Distinct paths give independent
//! streams, identical paths give identical streams, and no stream is ever
//! shared between trials.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags. One per random purpose so the draw order inside one purpose
/// can change without disturbing the others.
pub const STREAM_SOURCE: u64 = 0x01;
pub const STREAM_QUANT: u64 = 0x02;
pub const STREAM_CHANNEL: u64 = 0x03;
pub const STREAM_NOISE: u64 = 0x04;
pub const STREAM_TRIAL: u64 = 0x05;
pub const STREAM_TRAIN: u64 = 0x06;
pub const STREAM_KMEANS: u64 = 0x07;
pub const STREAM_MASTER_CODEBOOK: u64 = 0x08;

/// SplitMix64 finalizer; full-period mixing of a 64-bit counter.
fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` and a path of tags/indices.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    let mut h = splitmix(master);
    for &p in path {
        h = splitmix(h ^ splitmix(p));
    }
    h
}

/// ChaCha8 stream for the given derivation path.
pub fn rng(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(master, path))
}
