//! Deterministic RNG streams.
//!
//! Every stochastic loop (bootstrap replicates, Monte Carlo replications)
//! draws from a stream derived from `(seed, index)`, so results do not
//! depend on execution order or the degree of concurrency.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent RNG stream for one replicate of a seeded run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
