//! Seeded, splittable random source.
//!
//! Draws come from ChaCha8 keyed by a 64-bit seed, so a given seed produces
//! the same stream on every platform. Child streams are derived from the
//! parent seed and a label, never from the parent's position, which keeps
//! `split` results stable no matter how many draws the parent has made.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    draws: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            draws: 0,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of primitive draws taken so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Independent child stream keyed by `label`.
    pub fn split(&self, label: &str) -> Rng {
        Rng::new(splitmix64(self.seed ^ fnv1a(label.as_bytes())))
    }

    /// Independent child stream keyed by an integer, for replicate and cell
    /// indices.
    pub fn split_index(&self, index: u64) -> Rng {
        Rng::new(splitmix64(
            self.seed ^ splitmix64(index.wrapping_add(0x5851_f42d_4c95_7f2d)),
        ))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.draws += 1;
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.draws += 1;
        self.inner.random_range(0..n)
    }

    /// `k` distinct indices from `0..n` (partial Fisher-Yates), `k <= n`.
    pub fn sample_without_replacement(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }

    pub fn normal_tensor(&mut self, rows: usize, cols: usize) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| self.normal())
    }

    pub fn uniform_tensor(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| self.uniform_range(lo, hi))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
        }
        assert_eq!(a.draws(), 200);
    }

    #[test]
    fn split_is_position_independent() {
        let mut parent = Rng::new(7);
        let before = parent.split("critic").uniform();
        for _ in 0..10 {
            parent.uniform();
        }
        let after = parent.split("critic").uniform();
        assert_eq!(before.to_bits(), after.to_bits());
        assert_ne!(
            parent.split("critic").uniform().to_bits(),
            parent.split("generator").uniform().to_bits()
        );
        assert_ne!(
            parent.split_index(0).uniform().to_bits(),
            parent.split_index(1).uniform().to_bits()
        );
    }

    #[test]
    fn without_replacement_is_distinct() {
        let mut rng = Rng::new(3);
        let mut s = rng.sample_without_replacement(20, 20);
        s.sort_unstable();
        assert_eq!(s, (0..20).collect::<Vec<_>>());
    }
}
