//! Seed derivation for independent random streams.
//!
//! Every stream is a `ChaCha8Rng` seeded with `derive_seed(root, path)`, where
//! `path` names the stream (replication, restart, event index, ...). Seeds are
//! mixed through SplitMix64 so neighbouring paths give unrelated streams and
//! the draws of one stream never depend on how many draws another consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc.wrapping_add(splitmix64(p ^ 0xD6E8_FEB8_6659_FD93))))
}

pub fn stream(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}
