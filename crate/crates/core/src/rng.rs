//! Seeded random streams.
//!
//! Every independent unit of work (a Monte Carlo path, a bootstrap resample)
//! draws from its own ChaCha8 stream: key from the run seed, stream id from
//! the unit index. Results therefore do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// RNG for work unit `stream` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
