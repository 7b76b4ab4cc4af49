//! Counter-based splittable pseudo-random number generation.
//!
//! Monte Carlo work in this crate must be reproducible *independently of
//! thread count and iteration order*. The usual stateful-generator idiom
//! (one generator, shared or cloned ad hoc) breaks that as soon as work is
//! distributed, so everything here is built on a keyed counter: a [`Stream`]
//! is a pair `(key, counter)`, and the `n`-th output is a bijective mix of
//! `key + n·γ`. Any worker can therefore be handed a cheap, statistically
//! independent [`Stream::substream`] derived from a parent key and an
//! integer identifier — replication number, group index, chunk index — and
//! the combined results do not depend on who ran what where.
//!
//! The mixing function is the 64-bit finalizer used by SplitMix64: two
//! xor-shift/multiply rounds that are bijective on `u64`, which guarantees
//! the counter sequence never collides within a stream.

/// Weyl-sequence increment: the odd integer nearest `2^64 / φ`.
const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Bijective 64-bit finalizer (SplitMix64 / MurmurHash3 style).
#[inline]
fn mix64(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A splittable counter-based random stream.
///
/// Cloning a `Stream` clones its position; use [`Stream::substream`] to
/// obtain statistically independent generators instead.
#[derive(Debug, Clone)]
pub struct Stream {
    key: u64,
    counter: u64,
    /// Second normal deviate from the last polar round, if unused.
    cached_normal: Option<f64>,
}

impl Stream {
    /// Creates the root stream for a user-supplied seed.
    ///
    /// Seeds are arbitrary; `0` is as good as any other value because the
    /// key is passed through the finalizer before use.
    pub fn from_seed(seed: u64) -> Self {
        Stream {
            key: mix64(seed ^ GAMMA),
            counter: 0,
            cached_normal: None,
        }
    }

    /// Derives an independent stream identified by `id`.
    ///
    /// The child key mixes the parent key with a finalized copy of `id`, so
    /// `s.substream(0)`, `s.substream(1)`, … form a family of generators
    /// that may be consumed concurrently in any order. Derivation depends
    /// only on the parent *key*, not on how far the parent has advanced.
    #[must_use]
    pub fn substream(&self, id: u64) -> Self {
        Stream {
            key: mix64(self.key ^ mix64(id.wrapping_mul(GAMMA).wrapping_add(1))),
            counter: 0,
            cached_normal: None,
        }
    }

    /// Next raw 64-bit output.
    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform double in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        // 2^-53; the shift keeps exactly the 53 high-quality top bits.
        (self.next_u64() >> 11) as f64 * 1.110_223_024_625_156_5e-16
    }

    /// Uniform integer in `[0, bound)` without modulo bias.
    ///
    /// Uses rejection on the high multiply region; expected iterations are
    /// below 2 for every bound.
    #[inline]
    pub fn next_index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        let bound = bound as u64;
        // Reject the tail of the final incomplete block of size `bound`.
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return (x % bound) as usize;
            }
        }
    }

    /// Standard normal deviate via the Marsaglia polar method.
    ///
    /// Each accepted polar round yields two deviates; the second is cached
    /// and returned by the following call, so a stream's normal sequence is
    /// a pure function of its key and draw index.
    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.next_f64() - 1.0;
            let v = 2.0 * self.next_f64() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = libm::sqrt(-2.0 * libm::log(s) / s);
                self.cached_normal = Some(v * m);
                return u * m;
            }
        }
    }

    /// Chi-square deviate with one degree of freedom (a squared normal).
    #[inline]
    pub fn next_chi2_1(&mut self) -> f64 {
        let z = self.next_normal();
        z * z
    }
}
