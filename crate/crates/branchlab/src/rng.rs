//! Deterministic RNG streams.
//!
//! Replicated experiments derive one independent stream per task from a
//! 64-bit master seed using counter-based splitting: stream `i` is seeded by
//! `splitmix64` applied to `master + i * GOLDEN`. Streams for distinct
//! indices never share state, so parallel replicates are reproducible and
//! independent of scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// One step of the splitmix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 stream for task `index` under `master` seed.
pub fn stream(master: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = master ^ splitmix64(index);
    for chunk in key.chunks_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
