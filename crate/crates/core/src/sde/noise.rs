//! Counter-based Gaussian noise.
//!
//! Every draw is a pure function of `(seed, path, step, channel)`: the path
//! selects a ChaCha stream and `(step, channel)` selects the word position
//! inside that stream. Results therefore do not depend on the order in which
//! paths are simulated or on how many workers run them.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use statrs::function::erf::erfc_inv;

/// A Brownian driver of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    /// The index Brownian motion `B`.
    Index,
    /// The idiosyncratic Brownian motion `W^j` of stock `j` (0-based).
    Stock(usize),
    /// The idiosyncratic Brownian motion of a calibration particle.
    Particle,
}

impl Channel {
    #[inline]
    pub fn id(self) -> u64 {
        match self {
            Channel::Index => 0,
            Channel::Stock(j) => 1 + j as u64,
            Channel::Particle => 0xFFFF_FFFF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoisePlan {
    seed: u64,
}

impl NoisePlan {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// An independent plan deterministically derived from this one and `tag`.
    pub fn derive(&self, tag: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(tag.wrapping_add(0x9E37_79B9_7F4A_7C15));
        Self::new(rng.next_u64())
    }

    pub fn path(&self, path: usize) -> PathNoise {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path as u64);
        PathNoise { rng }
    }

    /// Single draw; prefer [`PathNoise`] when drawing many values for one path.
    pub fn normal(&self, path: usize, step: usize, channel: Channel) -> f64 {
        self.path(path).normal(step, channel)
    }
}

/// Noise source for a single path.
pub struct PathNoise {
    rng: ChaCha8Rng,
}

#[inline]
fn word_position(step: usize, channel: u64) -> u128 {
    debug_assert!(channel <= u32::MAX as u64);
    (((step as u128) << 32) | channel as u128) * 2
}

/// Standard normal from 64 random bits by inversion of the CDF.
#[inline]
pub fn normal_from_bits(bits: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let m = bits >> 11;
    if m < 1 << 52 {
        -std::f64::consts::SQRT_2 * erfc_inv(2.0 * (m as f64 + 0.5) * SCALE)
    } else {
        // upper half through 1 - u, which is exact
        std::f64::consts::SQRT_2 * erfc_inv(2.0 * (((1u64 << 53) - m) as f64 - 0.5) * SCALE)
    }
}

impl PathNoise {
    #[inline]
    pub fn normal(&mut self, step: usize, channel: Channel) -> f64 {
        self.rng.set_word_pos(word_position(step, channel.id()));
        normal_from_bits(self.rng.next_u64())
    }

    /// Draws channels `Index, Stock(0), Stock(1), ...` for one step into `out`.
    pub fn fill_step(&mut self, step: usize, out: &mut [f64]) {
        self.rng.set_word_pos(word_position(step, 0));
        for z in out.iter_mut() {
            *z = normal_from_bits(self.rng.next_u64());
        }
    }
}
