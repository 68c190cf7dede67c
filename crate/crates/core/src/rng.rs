//! Deterministic random-number streams.
//!
//! Every stochastic component draws from its own named stream derived from the
//! single root seed. Streams are independent of thread scheduling and of each
//! other: a worker advancing its sampler stream never perturbs another
//! worker's draws, which is what makes sequential and concurrent execution
//! produce identical results.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over a byte slice; stable across platforms and releases.
fn fnv1a(bytes: &[u8], mut state: u64) -> u64 {
    for &b in bytes {
        state ^= u64::from(b);
        state = state.wrapping_mul(0x0000_0100_0000_01b3);
    }
    state
}

/// Mixes a root seed, a stream name, and positional salts into one 64-bit
/// stream seed.
pub fn stream_seed(root: u64, name: &str, salts: &[u64]) -> u64 {
    let mut state = fnv1a(&root.to_le_bytes(), 0xcbf2_9ce4_8422_2325);
    state = fnv1a(name.as_bytes(), state);
    for &s in salts {
        state = fnv1a(&s.to_le_bytes(), state);
    }
    // splitmix64 finalizer to spread low-entropy inputs over the whole word.
    state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for the named stream.
pub fn stream(root: u64, name: &str, salts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(root, name, salts))
}

/// splitmix64 of a bare value; used for seed-free deterministic hashing such
/// as split assignment.
pub fn mix64(v: u64) -> u64 {
    let mut z = v.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
