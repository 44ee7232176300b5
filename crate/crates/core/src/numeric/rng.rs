use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Reproducible random stream keyed by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream parameter gives independent
/// sequences for the same seed. Cloning copies the position, so a clone
/// replays exactly the draws the original would make next.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform index in `0..n`; `n` must be positive.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random::<u64>()
    }
}

/// Stream-id namespaces so that every consumer of randomness draws from its
/// own stream of the run seed.
pub mod streams {
    pub const ITEM_EMBEDDINGS: u64 = 1;
    pub const POLICY_INIT: u64 = 2;
    pub const POPULATION: u64 = 3;
    pub const EVAL_POPULATION: u64 = 4;

    const EPISODE_BASE: u64 = 1 << 40;
    const REFLECTION_BASE: u64 = 2 << 40;
    const EVAL_EPISODE_BASE: u64 = 3 << 40;
    const EVAL_REFLECTION_BASE: u64 = 4 << 40;

    /// Stream for the environment and actor sampling of training episode `index`.
    pub fn episode(index: u64) -> u64 {
        EPISODE_BASE + index
    }

    /// Stream for reflection sampling of training episode `index`.
    pub fn reflection(index: u64) -> u64 {
        REFLECTION_BASE + index
    }

    pub fn eval_episode(index: u64) -> u64 {
        EVAL_EPISODE_BASE + index
    }

    pub fn eval_reflection(index: u64) -> u64 {
        EVAL_REFLECTION_BASE + index
    }
}
