//! Deterministic random draws for scenarios.
//!
//! The generator is pinned for cross-language reproducibility: ChaCha12
//! keyed by the 64-bit scenario seed (little-endian in the first 8 key
//! bytes, rest zero), consumed as a u64 stream, mapped to uniforms via the
//! top 53 bits, and to normals via the Box-Muller transform. Complex
//! normals draw (re, im) as two consecutive N(0,1)/sqrt(2) values.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::linalg::{c, C64, CMatrix, CVector};

pub struct DeterministicRng {
    inner: ChaCha12Rng,
    cached: Option<f64>,
}

impl DeterministicRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        DeterministicRng { inner: ChaCha12Rng::from_seed(key), cached: None }
    }

    /// Uniform in [0, 1) from the top 53 bits of one u64 draw.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Standard normal via Box-Muller; draws are consumed in pairs.
    pub fn normal(&mut self) -> f64 {
        if let Some(v) = self.cached.take() {
            return v;
        }
        // Guard u1 > 0 so the log is finite.
        let mut u1 = self.uniform();
        if u1 <= f64::MIN_POSITIVE {
            u1 = f64::MIN_POSITIVE;
        }
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.cached = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Standard complex normal: E|z|^2 = 1.
    pub fn complex_normal(&mut self) -> C64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let re = self.normal() * s;
        let im = self.normal() * s;
        c(re, im)
    }

    pub fn complex_vector(&mut self, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| self.complex_normal())
    }

    pub fn complex_matrix(&mut self, n: usize) -> CMatrix {
        // Row-major fill order is part of the determinism contract.
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.complex_normal();
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = DeterministicRng::new(7);
        let mut b = DeterministicRng::new(7);
        for _ in 0..100 {
            assert_eq!(a.normal(), b.normal());
        }
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = DeterministicRng::new(1);
        let mut b = DeterministicRng::new(2);
        let same = (0..10).filter(|_| a.uniform() == b.uniform()).count();
        assert!(same < 10);
    }

    #[test]
    fn complex_normal_unit_variance() {
        let mut rng = DeterministicRng::new(42);
        let n = 20_000;
        let mean_sq: f64 = (0..n).map(|_| rng.complex_normal().norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean_sq - 1.0).abs() < 0.03, "E|z|^2 = {mean_sq}");
    }
}
