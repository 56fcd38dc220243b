//! Seeded random streams.
//!
//! Every random quantity in the crate comes from ChaCha8 keyed by a 64-bit
//! seed. The key is the seed in little-endian order in bytes 0..8 with the
//! remaining 24 bytes zero; the ChaCha stream (nonce) separates independent
//! uses of the same seed:
//!
//! | stream | use                                   |
//! |--------|---------------------------------------|
//! | 0      | target-model logits                   |
//! | 1      | draft-model noise logits              |
//! | 2      | decoding uniforms (draft, verify)     |
//! | 3      | prompt tokens                         |
//!
//! A uniform is `(next_u64 >> 11) * 2^-53`, in `[0, 1)`. A standard normal is
//! one Box-Muller draw from two consecutive uniforms `u1, u2`:
//! `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`; the sine branch is discarded.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};

pub const STREAM_TARGET_LOGITS: u64 = 0;
pub const STREAM_DRAFT_NOISE: u64 = 1;
pub const STREAM_DECODE: u64 = 2;
pub const STREAM_PROMPT: u64 = 3;

/// A source of uniforms in `[0, 1)`.
///
/// Decoding phases pull from this trait so tests can script exact draws.
pub trait UniformSource {
    fn next_uniform(&mut self) -> f64;
}

#[derive(Debug, Clone)]
pub struct SeededStream {
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_uniform();
        let u2 = self.next_uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform token index in `[0, n)`.
    pub fn next_index(&mut self, n: usize) -> usize {
        ((self.next_uniform() * n as f64) as usize).min(n - 1)
    }
}

impl UniformSource for SeededStream {
    fn next_uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Replays a fixed list of uniforms; panics when exhausted.
#[derive(Debug, Clone)]
pub struct ScriptedUniforms {
    draws: Vec<f64>,
    pos: usize,
}

impl ScriptedUniforms {
    pub fn new(draws: impl Into<Vec<f64>>) -> Self {
        Self {
            draws: draws.into(),
            pos: 0,
        }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl UniformSource for ScriptedUniforms {
    fn next_uniform(&mut self) -> f64 {
        let u = *self
            .draws
            .get(self.pos)
            .expect("scripted uniform stream exhausted");
        self.pos += 1;
        u
    }
}

impl<T: UniformSource + ?Sized> UniformSource for &mut T {
    fn next_uniform(&mut self) -> f64 {
        (**self).next_uniform()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededStream::new(11, STREAM_DECODE);
        let mut b = SeededStream::new(11, STREAM_DECODE);
        for _ in 0..100 {
            assert_eq!(a.next_uniform().to_bits(), b.next_uniform().to_bits());
        }
    }

    #[test]
    fn streams_are_independent() {
        let mut a = SeededStream::new(11, STREAM_TARGET_LOGITS);
        let mut b = SeededStream::new(11, STREAM_DRAFT_NOISE);
        let xs: Vec<f64> = (0..8).map(|_| a.next_uniform()).collect();
        let ys: Vec<f64> = (0..8).map(|_| b.next_uniform()).collect();
        assert_ne!(xs, ys);
    }

    #[test]
    fn uniforms_in_unit_interval() {
        let mut s = SeededStream::new(0, 0);
        for _ in 0..10_000 {
            let u = s.next_uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn normal_moments() {
        let mut s = SeededStream::new(5, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.next_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn scripted_replays_in_order() {
        let mut s = ScriptedUniforms::new(vec![0.1, 0.9]);
        assert_eq!(s.next_uniform(), 0.1);
        assert_eq!(s.next_uniform(), 0.9);
        assert_eq!(s.consumed(), 2);
    }
}
