//! Counter-style random streams: one independent ChaCha8 stream per
//! (seed, purpose, index), so results never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identity of the generator, recorded in run metadata.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9); key = seed_from_u64(seed ^ domain), stream = index";

pub(crate) const DOMAIN_SIMULATION: u64 = 0x5349_4d55_4c41_5445;
pub(crate) const DOMAIN_BOOTSTRAP: u64 = 0x424f_4f54_5354_5250;

pub(crate) fn stream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain);
    rng.set_stream(index);
    rng
}
