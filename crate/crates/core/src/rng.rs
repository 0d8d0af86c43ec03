//! Deterministic randomness.
//!
//! Every random draw in the crate is keyed by a 64-bit seed derived from an
//! experiment seed plus integer tags (model, trial index, ...), so results do
//! not depend on the order in which trials are scheduled.

use num_complex::Complex;
use rand::{RngCore, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of tags into a new seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix(base), |acc, &t| splitmix(acc ^ splitmix(t.wrapping_add(GOLDEN))))
}

fn expand_key(seed: u64) -> [u8; 32] {
    let mut key = [0u8; 32];
    let mut s = seed;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    key
}

/// General-purpose generator for a derived seed.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(expand_key(seed))
}

/// Uniform on `(0, 1]` from 53 random bits.
#[inline]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Standard complex Gaussian from two uniform words: `|w|^2 ~ Exp(1)`, so
/// real and imaginary parts are independent with variance 1/2 each.
#[inline]
pub fn complex_gaussian_from_bits(a: u64, b: u64) -> Complex<f64> {
    let radius = (-open_unit(a).ln()).sqrt();
    let angle = std::f64::consts::TAU * open_unit(b);
    Complex::from_polar(radius, angle)
}

/// Draws one standard complex Gaussian from any generator.
pub fn complex_gaussian<R: RngCore>(rng: &mut R) -> Complex<f64> {
    let a = rng.next_u64();
    let b = rng.next_u64();
    complex_gaussian_from_bits(a, b)
}

/// Counter-based stream of complex Gaussians: draw `k` consumes words
/// `4k..4k+4` of a ChaCha20 keystream, so any prefix is reproducible on its
/// own and can be extended without changing earlier values.
pub struct GaussianStream {
    inner: ChaCha20Rng,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::from_seed(expand_key(seed)),
        }
    }

    /// Jumps to draw number `index`.
    pub fn seek(&mut self, index: u64) {
        self.inner.set_word_pos(u128::from(index) * 4);
    }

    pub fn next_gaussian(&mut self) -> Complex<f64> {
        complex_gaussian(&mut self.inner)
    }
}
