//! Deterministic RNG streams.
//!
//! Every node gets its own ChaCha12 stream seeded from (master seed, node id)
//! through a splitmix64 mix, so adding or removing nodes never perturbs the
//! random sequence another node sees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// One splitmix64 step: mixes `state` into a well-distributed 64-bit value.
fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives the 64-bit seed for substream `stream_id` of `master_seed`.
pub fn derive_seed(master_seed: u64, stream_id: u64) -> u64 {
    splitmix64(master_seed.wrapping_add(splitmix64(stream_id)))
}

/// RNG for substream `stream_id` (a node id, or a reserved scenario stream).
pub fn stream_rng(master_seed: u64, stream_id: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master_seed, stream_id))
}
