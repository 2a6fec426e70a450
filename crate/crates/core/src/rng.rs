//! Seeded randomness.
//!
//! Every run draws from xoshiro256++ seeded through SplitMix64. A run seed is
//! split into independent streams with the generator's 2^128 jump so that
//! exploration draws never perturb environment draws.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

/// Name recorded in run metadata.
pub const RNG_ALGORITHM: &str = "xoshiro256++/splitmix64-seeded/jump-split";

pub type Rng = Xoshiro256PlusPlus;

pub fn seeded(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// `index`-th non-overlapping stream derived from `seed`.
pub fn stream(seed: u64, index: u32) -> Rng {
    let mut rng = seeded(seed);
    for _ in 0..index {
        rng.jump();
    }
    rng
}

/// Deterministic per-run streams.
#[derive(Clone, Debug)]
pub struct RunRngs {
    pub env: Rng,
    pub policy: Rng,
    pub selector: Rng,
    pub init: Rng,
}

impl RunRngs {
    pub fn new(seed: u64) -> Self {
        RunRngs {
            env: stream(seed, 0),
            policy: stream(seed, 1),
            selector: stream(seed, 2),
            init: stream(seed, 3),
        }
    }
}

/// Uniform in [0, 1) with 53 bits of precision.
#[inline]
pub fn uniform(rng: &mut Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in [0, n) by Lemire's widening-multiply rejection.
#[inline]
pub fn below(rng: &mut Rng, n: usize) -> usize {
    assert!(n > 0, "below(0)");
    let n = n as u64;
    let threshold = n.wrapping_neg() % n;
    loop {
        let m = (rng.next_u64() as u128) * (n as u128);
        if (m as u64) >= threshold {
            return (m >> 64) as usize;
        }
    }
}

/// Uniform in [lo, hi).
#[inline]
pub fn uniform_range(rng: &mut Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * uniform(rng)
}
