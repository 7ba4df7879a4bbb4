//! Counter-keyed Gaussian noise.
//!
//! Every deviate is a pure function of `(seed, step, particle, partner,
//! coordinate)`: the pair `(step, particle)` selects an independent
//! Xoshiro256++ stream through a SplitMix64 key schedule, and
//! `(partner, coordinate)` is the position inside that stream. Rows can be
//! generated in any order, on any thread, with identical results.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;

const DOMAIN_STEP: u64 = 0x243f_6a88_85a3_08d3;
const DOMAIN_INIT: u64 = 0x1319_8a2e_0370_7344;
const DOMAIN_AUX: u64 = 0xa409_3822_299f_31d0;
const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a domain tag, a seed and two counters into a stream key.
pub fn stream_key(domain: u64, seed: u64, a: u64, b: u64) -> u64 {
    let mut h = mix64(domain.wrapping_add(GOLDEN));
    h = mix64(h ^ seed.wrapping_add(GOLDEN.wrapping_mul(2)));
    h = mix64(h ^ a.wrapping_add(GOLDEN.wrapping_mul(3)));
    mix64(h ^ b.wrapping_add(GOLDEN.wrapping_mul(4)))
}

/// RNG for drawing initial positions under `seed`.
pub fn init_rng(seed: u64, n: usize) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(stream_key(DOMAIN_INIT, seed, n as u64, 0))
}

/// RNG for auxiliary draws (reference samples, subsampling) keyed by two labels.
pub fn aux_rng(seed: u64, a: u64, b: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(stream_key(DOMAIN_AUX, seed, a, b))
}

/// Source of the standard Gaussian deviates behind the increments `dB^{ik}`.
pub trait NoiseSource: Sync {
    /// Fills `out` (length `n * d`) with the deviates of particle `particle`
    /// at `step`, laid out partner-major: `out[k * d + c]`.
    fn fill_row(&self, step: u64, particle: usize, out: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        NoiseStream { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn row_rng(&self, step: u64, particle: usize) -> Xoshiro256PlusPlus {
        Xoshiro256PlusPlus::seed_from_u64(stream_key(DOMAIN_STEP, self.seed, step, particle as u64))
    }

    /// Random access to a single deviate. Costs `O(partner * dim)`; meant for
    /// checks, not for the integrator.
    pub fn deviate(&self, step: u64, particle: usize, partner: usize, coord: usize, dim: usize) -> f64 {
        assert!(coord < dim);
        let mut rng = self.row_rng(step, particle);
        let skip = partner * dim + coord;
        for _ in 0..skip {
            let _: f64 = rng.sample(StandardNormal);
        }
        rng.sample(StandardNormal)
    }
}

impl NoiseSource for NoiseStream {
    fn fill_row(&self, step: u64, particle: usize, out: &mut [f64]) {
        let mut rng = self.row_rng(step, particle);
        for x in out.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
    }
}
