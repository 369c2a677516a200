//! Counter-based random streams.
//!
//! A stream is identified by `(seed, domain, counter)`. Work that is split by
//! scene or by iteration draws from its own stream, so results are identical
//! whether the pieces run in parallel, sequentially, or after a resume.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains, one per consumer.
pub mod domain {
    pub const GENERATE: u64 = 1;
    pub const MASK: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const OVERSAMPLE: u64 = 6;
    pub const GUMBEL: u64 = 7;
    pub const GSL_INIT: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(domain)));
    rng.set_stream(counter);
    rng
}
