//! Seed derivation and random streams.
//!
//! Every random stream in the simulator is a ChaCha8 generator whose 256-bit
//! key is derived from a tuple of integers with the SplitMix64 finalizer.
//! Streams are addressed by `(seed, domain, a, b)` instead of being threaded
//! through mutable state, so any stream can be reconstructed independently
//! (episode sampling, pedestrian goal respawn, random ego actions, and so on).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulator randomness.
pub type StreamRng = ChaCha8Rng;

/// Stream domains. Distinct domains never share a key for equal indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Domain {
    Episode = 1,
    GoalRespawn = 2,
    EgoPolicy = 3,
    SweepEpisode = 4,
    Training = 5,
    Test = 6,
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes an ordered tuple of words into one 64-bit identifier.
pub fn mix(words: &[u64]) -> u64 {
    let mut h = 0x243F_6A88_85A3_08D3u64;
    for &w in words {
        h = splitmix64(h ^ splitmix64(w));
    }
    h
}

/// Opens the stream addressed by `(seed, domain, a, b)`.
pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> StreamRng {
    let base = mix(&[seed, domain as u64, a, b]);
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(base.wrapping_add(i as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
