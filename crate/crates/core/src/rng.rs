//! Counter-based pseudo-random numbers.
//!
//! The generator is a SplitMix64 finalizer applied to a Weyl sequence:
//! output `i` of a stream is `mix(key + (i + 1) * GOLDEN)`, where `key`
//! combines the seed and the stream id. Every output depends only on
//! `(seed, stream, counter)`, so runs are reproducible across platforms and
//! streams can be derived without touching shared state.

use crate::error::{invalid, Result};

/// Weyl increment (2^64 / golden ratio).
pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
/// First SplitMix64 multiplier.
pub const MIX1: u64 = 0xBF58_476D_1CE4_E5B9;
/// Second SplitMix64 multiplier.
pub const MIX2: u64 = 0x94D0_49BB_1331_11EB;
/// Tweak separating stream derivation from sample generation.
pub const STREAM_TWEAK: u64 = 0xD1B5_4A32_D192_ED03;

/// SplitMix64 finalizer; a bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX2);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngState {
    pub seed: u64,
    pub stream: u64,
    pub counter: u64,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, stream: 0, counter: 0 }
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        RngState { seed, stream, counter: 0 }
    }

    #[inline]
    fn key(&self) -> u64 {
        mix64(self.seed) ^ self.stream
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key().wrapping_add(self.counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform on [0, 1) with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`.
    pub fn next_index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// A pair of independent standard normals (Box-Muller, two uniforms).
    #[inline]
    pub fn next_gauss_pair(&mut self) -> (f64, f64) {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let a = 2.0 * std::f64::consts::PI * u2;
        (r * a.cos(), r * a.sin())
    }

    pub fn next_gauss(&mut self) -> f64 {
        self.next_gauss_pair().0
    }

    /// Child stream number `index`. For a fixed parent the map
    /// `index -> child` is injective because it is a composition of bijections.
    pub fn split(&self, index: u64) -> RngState {
        let stream = mix64(self.stream ^ mix64(index ^ STREAM_TWEAK));
        let stream = stream ^ mix64(self.counter.wrapping_add(GOLDEN));
        RngState { seed: self.seed, stream, counter: 0 }
    }
}

pub fn gauss_sample(rng: &mut RngState, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let (a, b) = rng.next_gauss_pair();
        out.push(a);
        out.push(b);
    }
    out.truncate(n);
    out
}

pub fn uniform_sample(rng: &mut RngState, lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return invalid(format!("uniform_sample needs lo < hi, got [{lo}, {hi})"));
    }
    let w = hi - lo;
    Ok((0..n)
        .map(|_| {
            let x = lo + w * rng.next_f64();
            if x < hi {
                x
            } else {
                lo
            }
        })
        .collect())
}

pub fn split_stream(rng: &RngState, index: u64) -> RngState {
    rng.split(index)
}
