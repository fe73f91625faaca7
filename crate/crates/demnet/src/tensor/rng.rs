//! Deterministic pseudo-random number generation.
//!
//! Everything stochastic in the crate (weight init, augmentation, shuffling)
//! draws from [`Rng`], a SplitMix64 generator. Streams for distinct purposes
//! are derived from one master seed so that adding draws to one consumer
//! never perturbs another. The derivation is stateless: a stream is fully
//! determined by `(master_seed, purpose, index)`, which is what makes
//! checkpoint resume exact without serializing generator state.

/// Purpose tag for a derived stream. Each variant owns a disjoint portion
/// of the seed space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Parameter initialization. Index is unused (pass 0).
    Weights,
    /// Data augmentation. Index identifies the (image, transform) pair.
    Augment,
    /// Epoch shuffling. Index is the zero-based epoch.
    Shuffle,
    /// Train/validation/test splitting. Index is the class label.
    Split,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Weights => 0x5745_4947_4854_5331,
            Stream::Augment => 0x4155_474d_454e_5432,
            Stream::Shuffle => 0x5348_5546_464c_4533,
            Stream::Split => 0x5350_4c49_5453_5434,
        }
    }
}

/// SplitMix64 finalizer: a bijective avalanche mix on 64 bits.
#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// SplitMix64 generator. State advances by the golden-ratio increment and
/// each output is the finalizer mix of the new state.
#[derive(Debug, Clone)]
pub struct Rng {
    state: u64,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

impl Rng {
    /// Generator seeded directly. Two generators with the same seed produce
    /// identical sequences on every platform.
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Stream derived from `(master, purpose, index)`. The three inputs are
    /// folded through the finalizer so related indices land far apart.
    pub fn stream(master: u64, purpose: Stream, index: u64) -> Self {
        let a = mix(master ^ purpose.tag());
        let b = mix(a ^ index.wrapping_mul(GOLDEN));
        Rng::new(b)
    }

    /// Next raw 64-bit value.
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform f64 in [0, 1). Uses the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform f64 in [lo, hi).
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in [0, n). `n` must be nonzero. Uses the
    /// multiply-shift bounded draw; the modulo bias at n << 2^64 is far
    /// below anything observable.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    /// Standard normal deviate via Box-Muller. One value per call; the
    /// second root is discarded to keep the draw count predictable.
    pub fn normal(&mut self) -> f64 {
        // u1 in (0, 1] so the log argument is never zero.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Rng::new(42);
        let mut b = Rng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn different_seeds_diverge() {
        let mut a = Rng::new(1);
        let mut b = Rng::new(2);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn splitmix_reference_values() {
        // Reference sequence for seed 0x1234567 computed from the published
        // SplitMix64 algorithm (state += 0x9e3779b97f4a7c15, then the
        // xor-multiply finalizer). Pins the implementation to the standard.
        let mut r = Rng::new(0x1234567);
        let got: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        let want = [
            0x3a34_ce63_80fc_0bc5_u64,
            0xc05a_6778_50dc_981a,
            0x9e32_cdf7_9483_70bd,
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn streams_are_independent() {
        let mut w = Rng::stream(42, Stream::Weights, 0);
        let mut a = Rng::stream(42, Stream::Augment, 0);
        let mut s = Rng::stream(42, Stream::Shuffle, 0);
        let x = [w.next_u64(), a.next_u64(), s.next_u64()];
        assert_ne!(x[0], x[1]);
        assert_ne!(x[1], x[2]);
        assert_ne!(x[0], x[2]);
    }

    #[test]
    fn stream_indices_do_not_collide() {
        let mut seen = std::collections::HashSet::new();
        for idx in 0..1000 {
            let mut r = Rng::stream(7, Stream::Augment, idx);
            assert!(seen.insert(r.next_u64()), "collision at index {idx}");
        }
    }

    #[test]
    fn next_f64_in_unit_interval() {
        let mut r = Rng::new(99);
        for _ in 0..10_000 {
            let x = r.next_f64();
            assert!((0.0..1.0).contains(&x));
        }
    }

    #[test]
    fn below_is_in_range_and_covers() {
        let mut r = Rng::new(5);
        let mut hits = [0usize; 7];
        for _ in 0..7000 {
            hits[r.below(7)] += 1;
        }
        for (i, &h) in hits.iter().enumerate() {
            assert!(h > 700, "bucket {i} underfilled: {h}");
        }
    }

    #[test]
    fn normal_moments_are_plausible() {
        let mut r = Rng::new(123);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let x = r.normal();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.03, "var {var}");
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut r = Rng::new(8);
        let mut v: Vec<u32> = (0..100).collect();
        r.shuffle(&mut v);
        let mut sorted = v.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        assert_ne!(v, (0..100).collect::<Vec<_>>());
    }
}
