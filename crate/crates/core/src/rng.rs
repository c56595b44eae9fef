//! Seeded random streams.
//!
//! All randomness goes through ChaCha20, a counter-based generator, so a
//! (seed, stream) pair yields the same sequence on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Environment variable holding the default seed for the command line.
pub const SEED_ENV: &str = "EXPOSURE_LENS_SEED";

/// Generator for replicate/stream `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
