//! Seeded random streams.
//!
//! Every run has one root seed. Each concern draws from its own ChaCha12
//! stream (`set_stream`), so adding a UE or changing the policy does not shift
//! the draws seen by unrelated parts of the model. ChaCha output is specified
//! by the algorithm, so identical seeds give identical sequences everywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Independent consumers of randomness within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Topology,
    Mobility(u32),
    Traffic,
    Policy,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Topology => 1 << 32,
            Stream::Mobility(i) => (2 << 32) | u64::from(i),
            Stream::Traffic => 3 << 32,
            Stream::Policy => 4 << 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha12Rng,
}

impl RandomSource {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream.id());
        RandomSource { seed, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform in `[lo, hi)`; returns `lo` for an empty range.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.unit()
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: u32) -> u32 {
        assert!(n > 0, "empty range");
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.random()
    }
}
