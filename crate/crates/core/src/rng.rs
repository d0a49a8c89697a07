//! Seeded random streams.
//!
//! Every stochastic consumer draws from a ChaCha8 stream keyed by
//! `(seed, domain, index)`, so a batch produces the same numbers whether it
//! runs serially or fanned out across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random source used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// Stream domains. Distinct domains never share a key.
pub mod domain {
    pub const SCENARIO: u64 = 1;
    pub const DIFFUSE: u64 = 2;
    pub const DENOISE: u64 = 3;
    pub const TIMESTEP: u64 = 4;
    pub const TRACKING: u64 = 5;
    pub const OBSERVATION: u64 = 6;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent stream for item `index` of `domain` under `seed`.
pub fn stream(seed: u64, domain: u64, index: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(index);
    rng
}
