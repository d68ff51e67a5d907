//! Counter-based random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream keyed by the user seed
//! and a domain tag, with the stream number selecting an independent
//! substream (one per trial, bootstrap replicate, Monte Carlo block, ...).
//! Results therefore do not depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags that keep unrelated consumers of one seed apart.
pub mod domain {
    pub const SMM_CRITICAL: u64 = 1;
    pub const LENTH_CRITICAL: u64 = 2;
    pub const TREE_NODE: u64 = 3;
    pub const CV_FOLDS: u64 = 4;
    pub const SIM_TRUTH: u64 = 5;
    pub const SIM_NOISE: u64 = 6;
    pub const SIM_METHOD: u64 = 7;
    pub const DATASET: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes several words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Independent generator for (`seed`, `domain`, `index`).
pub fn stream_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, domain]));
    rng.set_stream(index);
    rng
}
