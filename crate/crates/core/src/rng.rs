//! Reproducible random streams.
//!
//! Every replication of an experiment draws from its own ChaCha stream,
//! addressed by the master seed and a stream number, so any replication can
//! be regenerated in isolation and parallel execution order does not matter.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ExperimentRng = ChaCha8Rng;

/// Stream `stream` of the generator seeded with `master`.
pub fn stream_rng(master: u64, stream: u64) -> ExperimentRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

/// Stream for replication `replication`, retry `attempt` (0 for the first try).
pub fn replication_rng(master: u64, replication: usize, attempt: usize) -> ExperimentRng {
    stream_rng(master, ((attempt as u64) << 32) | replication as u64)
}
