//! Deterministic random-stream derivation.
//!
//! Every stochastic component draws from its own [`ChaCha8Rng`] stream derived
//! from the run seed, a static purpose tag, and an index (e.g. a stage or
//! episode number). Streams are fixed by the triple alone — never by thread
//! scheduling or call order — so a run is bitwise reproducible for a fixed
//! seed regardless of how work is scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a 64-bit hash. Used for stream derivation and checkpoint checksums.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 step, used to expand a 64-bit state into key material.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent RNG stream for `(seed, tag, index)`.
///
/// The triple is serialized injectively (fixed-width seed and index around the
/// tag bytes), hashed, and expanded into a 256-bit ChaCha key.
pub fn stream(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    let mut bytes = Vec::with_capacity(16 + tag.len());
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(tag.as_bytes());
    bytes.extend_from_slice(&index.to_le_bytes());
    let mut state = fnv1a64(&bytes);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
