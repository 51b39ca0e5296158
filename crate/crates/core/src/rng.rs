//! Seed derivation for schedule-independent randomness.
//!
//! Every random stream (patient, client, sample, trajectory, bootstrap
//! resample) gets its own ChaCha8 generator seeded from the master seed and the
//! stream's index path, so results never depend on execution order or thread
//! count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `seed` with an index path into a new 64-bit seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &x| {
        splitmix64(acc ^ splitmix64(x.wrapping_mul(GOLDEN).wrapping_add(0x632B_E59B_D9B4_E019)))
    })
}

/// Generator for the stream identified by `path` under `seed`.
pub fn stream_rng(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
