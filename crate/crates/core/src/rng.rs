//! Reproducible random streams.
//!
//! Each block of a Monte Carlo run draws from its own ChaCha stream selected
//! by `(master_seed, block_index)`, so block data never depends on which
//! worker ran it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RngStream = ChaCha8Rng;

/// Stream reserved for pilot runs, kept apart from every block stream.
pub const PILOT_STREAM: u64 = u64::MAX;

pub fn block_stream(master_seed: u64, block: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(block);
    rng
}
