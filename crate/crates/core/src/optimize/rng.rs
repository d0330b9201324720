//! Counter-based random streams.
//!
//! Each consumer draws from a ChaCha stream addressed by (seed, domain,
//! ordinal), so the numbers a candidate sees do not depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const RANDOM_SEARCH: u64 = 1;
pub const GENETIC: u64 = 2;
pub const SYNTH: u64 = 3;

pub fn stream(seed: u64, domain: u64, ordinal: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(ordinal);
    rng
}
