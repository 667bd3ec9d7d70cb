//! Independent random streams derived from one master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Consumers of randomness. Each gets its own ChaCha stream, so turning a
/// stage off does not shift the numbers another stage sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    GoalSampling = 1,
    Rrt = 2,
    PathSampling = 3,
    RangeNoise = 4,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
