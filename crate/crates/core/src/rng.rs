//! Seeded random streams.
//!
//! Every random draw in the crate comes from `ChaCha20Rng`. A run is keyed
//! by a 64-bit seed; independent child streams (one per replication or
//! bootstrap replicate) reuse the seed's key with a distinct ChaCha stream
//! id, so they never overlap and can be consumed from any thread. Normal
//! deviates use the ziggurat sampler of `rand_distr::StandardNormal`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Root stream for `seed`.
pub fn root_rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Child stream `stream` of `seed`. Stream 0 is the root stream.
pub fn child_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A 64-bit seed derived from child stream `stream` of `seed`.
pub fn child_seed(seed: u64, stream: u64) -> u64 {
    child_rng(seed, stream).next_u64()
}
