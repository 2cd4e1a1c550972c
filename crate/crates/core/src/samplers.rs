//! Seeded RNG streams and the few scalar samplers the crate needs.

use libm::{cos, log, sqrt};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG used throughout the crate.
///
/// Streams derived from `(seed, stream)` pairs are statistically
/// independent, which is what rollouts and Monte-Carlo chunks rely on.
pub struct SlotRng(ChaCha8Rng);

impl SlotRng {
    pub fn from_seed(seed: u64) -> Self {
        SlotRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Independent stream `stream` of the root seed.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        SlotRng(rng)
    }

    /// Uniform draw on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }

    /// Unit-mean exponential draw.
    pub fn exponential(&mut self) -> f64 {
        // 1 - u is in (0, 1], so the log is finite.
        -log(1.0 - self.uniform())
    }

    /// Standard normal draw (Box-Muller, one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        sqrt(-2.0 * log(u1)) * cos(2.0 * core::f64::consts::PI * u2)
    }
}
