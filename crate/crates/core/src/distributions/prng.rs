//! Deterministic seeded generator.
//!
//! Algorithm: SplitMix64 for the uniform stream, Box–Muller (cosine branch)
//! for normals. Both are fixed here so that a seed plus a call sequence
//! reproduces the exact same values on every platform. Uniform doubles use
//! the top 53 bits of the state, giving values in `[0, 1)`.

use std::f64::consts::TAU;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// SplitMix64 stream with an explicit position counter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prng {
    seed: u64,
    state: u64,
    position: u64,
}

impl Prng {
    pub const ALGORITHM: &'static str = "splitmix64 / Box-Muller";

    pub fn new(seed: u64) -> Self {
        Prng {
            seed,
            state: seed,
            position: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of `u64` values drawn so far.
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GAMMA);
        self.position += 1;
        mix(self.state)
    }

    /// Uniform in `[0, 1)` with 53-bit resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)` by rejection-free modular scaling of the
    /// top bits; bias is below 2^-53 for the small `n` used here.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.next_f64() * n as f64) as usize % n
    }

    /// One standard normal draw via Box–Muller. Consumes exactly two
    /// uniforms; the sine twin is discarded to keep the stream layout
    /// trivially predictable.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // in (0, 1], safe for ln
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.normal();
        }
    }

    /// Independent stream derived from this generator's seed and an index.
    /// Derivation depends only on `(seed, index)`, not on the current
    /// position, so parallel and serial schedules agree exactly.
    pub fn substream(&self, index: u64) -> Prng {
        let derived = mix(self.seed ^ mix(index.wrapping_add(1).wrapping_mul(GAMMA)));
        Prng::new(derived)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_sequence() {
        let mut a = Prng::new(42);
        let mut b = Prng::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.position(), 100);
    }

    #[test]
    fn known_first_values() {
        // Freeze the stream so accidental algorithm changes are caught.
        let mut rng = Prng::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn uniform_in_range() {
        let mut rng = Prng::new(7);
        for _ in 0..10_000 {
            let v = rng.next_f64();
            assert!((0.0..1.0).contains(&v));
        }
    }

    #[test]
    fn substreams_differ_and_are_stable() {
        let rng = Prng::new(1234);
        let mut s0 = rng.substream(0);
        let mut s1 = rng.substream(1);
        assert_ne!(s0.next_u64(), s1.next_u64());
        let mut s0b = rng.substream(0);
        assert_eq!(Prng::new(1234).substream(0).next_u64(), s0b.next_u64());
    }
}
