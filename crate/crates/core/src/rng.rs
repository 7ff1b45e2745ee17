//! Deterministic random streams.
//!
//! Every stochastic stage draws from its own ChaCha8 stream whose seed is a
//! pure function of the master seed and a path of counters
//! `(replication, stage, ...)`. The split is counter based, so the stream a
//! replication sees does not depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stage tags used as the second element of a derivation path.
pub mod stage {
    pub const POPULATION: u64 = 1;
    pub const EDGES: u64 = 2;
    pub const SEEDS: u64 = 3;
    pub const RECRUIT_RDS: u64 = 4;
    pub const RECRUIT_RRDS: u64 = 5;
    pub const BOOTSTRAP_RDS: u64 = 6;
    pub const BOOTSTRAP_RRDS: u64 = 7;
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a counter path into a 64-bit seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(master), |acc, &c| mix64(acc ^ mix64(c.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// Seed of replication `index` under `master`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, &[index])
}

pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, path))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
