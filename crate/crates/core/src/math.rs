//! Float helpers that work without `std`, plus seed derivation and content
//! hashing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every stochastic step.
pub type SimRng = ChaCha8Rng;

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of stream tags into an independent sub-seed.
pub fn derive_seed(seed: u64, stream: &[u64]) -> u64 {
    stream.iter().fold(splitmix64(seed), |acc, &tag| {
        splitmix64(acc ^ splitmix64(tag))
    })
}

/// A generator for the stream identified by `(seed, stream...)`.
pub fn rng_for(seed: u64, stream: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, stream))
}

/// 64-bit FNV-1a over a sequence of floats' bit patterns.
#[derive(Debug, Clone, Copy)]
pub struct Fingerprint(u64);

impl Default for Fingerprint {
    fn default() -> Self {
        Fingerprint(0xcbf2_9ce4_8422_2325)
    }
}

impl Fingerprint {
    pub fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub fn write_f64s(&mut self, values: &[f64]) {
        for v in values {
            self.write_u64(v.to_bits());
        }
    }

    pub fn finish(self) -> u64 {
        self.0
    }
}

/// `ceil(x)` that ignores float noise just above an integer (e.g. `1.2 * 5`).
pub(crate) fn ceil_tolerant(x: f64) -> usize {
    let r = libm::round(x);
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as usize
    } else {
        ceil(x) as usize
    }
}
