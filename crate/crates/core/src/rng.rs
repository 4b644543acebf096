//! Seeded random streams.
//!
//! Every stochastic routine takes `&mut ChainRng` explicitly. ChaCha is a
//! counter-based generator, so independent streams for concurrent chains are
//! obtained by selecting a stream id rather than by reseeding.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type ChainRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> ChainRng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream(seed: u64, stream: u64) -> ChainRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
