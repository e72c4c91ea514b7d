//! Deterministic random-number plumbing.
//!
//! Every stochastic quantity in the crate is a pure function of a 64-bit
//! seed. Streams come from ChaCha8 (counter-based, so distinct seeds give
//! independent streams) and uniform doubles are built directly from the raw
//! 64-bit output, keeping the mapping bit-stable regardless of what the
//! `rand` distribution machinery does between releases.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Stream of i.i.d. draws derived from a single 64-bit seed.
pub struct SeededStream {
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on [0, 1) with 53 random mantissa bits.
    pub fn uniform_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [-half_width, half_width).
    pub fn uniform_symmetric(&mut self, half_width: f64) -> f64 {
        half_width * (2.0 * self.uniform_unit() - 1.0)
    }
}

/// SplitMix64 finalizer; mixes all 64 input bits into all output bits.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-realization seed for work item `index` under a master seed.
///
/// Pure function of (master, index), so the assignment of streams to work
/// items does not depend on scheduling or worker count.
pub fn realization_seed(master: u64, index: u64) -> u64 {
    mix64(master ^ mix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)))
}
