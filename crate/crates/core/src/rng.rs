//! Per-realization random streams.
//!
//! Every realization gets its own ChaCha8 stream: the key is expanded from
//! the master seed and the realization index selects the 64-bit stream id.
//! A realization's draws therefore depend only on `(master_seed, index)`,
//! never on which thread produced it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

pub fn stream(master_seed: u64, index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}
