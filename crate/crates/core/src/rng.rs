//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed, with the
//! ChaCha stream id selecting the consumer. A trial's channel noise lives on
//! its own stream and is consumed in (iteration, directed edge) order, so a
//! trial's draws depend only on the master seed and the trial index.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SHARED_SENSING: u64 = u64::MAX;

/// Channel-noise stream of one trial.
#[derive(Debug, Clone)]
pub struct TrialStream {
    pub trial: usize,
    pub seed: u64,
    pub rng: ChaCha8Rng,
}

impl TrialStream {
    pub fn new(seed: u64, trial: usize) -> Self {
        Self { trial, seed, rng: keyed(seed, 2 * trial as u64 + 1) }
    }
}

/// Sensing-noise stream for per-trial initial states.
pub fn sensing_stream(seed: u64, trial: usize) -> ChaCha8Rng {
    keyed(seed, 2 * trial as u64)
}

/// Sensing-noise stream for an initial state shared by all trials.
pub fn shared_sensing_stream(seed: u64) -> ChaCha8Rng {
    keyed(seed, SHARED_SENSING)
}

fn keyed(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
