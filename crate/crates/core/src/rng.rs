//! The one pseudo-random generator used by every stochastic source.
//!
//! SplitMix64: a 64-bit counter advanced by a fixed odd increment and fed
//! through an avalanching finalizer. Chosen because the output for draw `k`
//! depends only on `(seed, k)`, so per-source streams split from one master
//! seed are independent of each other and of generation order, and repeated
//! runs are bit-identical on a given platform.

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Finalizer from the SplitMix64 reference implementation.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    /// Stream for one spike source, split from the master seed. Streams for
    /// distinct `source_id`s never share state.
    pub fn for_source(seed: u64, source_id: u64) -> Self {
        SplitMix64 {
            state: mix64(seed) ^ mix64(source_id.wrapping_mul(GOLDEN_GAMMA) ^ GOLDEN_GAMMA),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Exponential with the given mean (inverse transform).
    pub fn exp(&mut self, mean: f64) -> f64 {
        debug_assert!(mean > 0.0);
        -mean * (1.0 - self.next_f64()).ln()
    }

    /// Geometric on {1, 2, 3, ...} with the given mean >= 1. Used for
    /// interval draws on a discrete clock grid where the minimum is one tick.
    pub fn geometric_min1(&mut self, mean: f64) -> u64 {
        debug_assert!(mean >= 1.0);
        let p = 1.0 / mean;
        if p >= 1.0 {
            return 1;
        }
        let u = self.next_f64();
        // Inversion: smallest k >= 1 with 1 - (1-p)^k > u.
        let k = ((1.0 - u).ln() / (1.0 - p).ln()).floor() as u64 + 1;
        k.max(1)
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Log-normal with E[X] = `mean` and the given sigma of the underlying
    /// normal. Used for per-neuron rate spread in the network surrogate.
    pub fn lognormal_mean1_scaled(&mut self, mean: f64, sigma: f64) -> f64 {
        mean * (self.normal() * sigma - 0.5 * sigma * sigma).exp()
    }
}
