//! Deterministic pseudo-random number generation.
//!
//! Two documented generators, chosen so that every run of the pipeline is
//! bit-reproducible from a single `u64` seed regardless of platform or
//! library version:
//!
//! * [`split_mix64`] — the SplitMix64 finalizer, used to expand seeds and to
//!   derive per-stream seeds (`seed ^ split_mix64(stream_id)`).
//! * [`Rng`] — xoshiro256** 1.0 (Blackman/Vigna), the workhorse generator.

/// One step of the SplitMix64 sequence starting at `state`.
#[inline]
pub fn split_mix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// xoshiro256** 1.0. State is seeded via SplitMix64 so any `u64` seed,
/// including zero, yields a valid nonzero state.
#[derive(Debug, Clone)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        let mut s = [0u64; 4];
        let mut acc = seed;
        for slot in s.iter_mut() {
            acc = acc.wrapping_add(0x9E37_79B9_7F4A_7C15);
            *slot = split_mix64(acc);
        }
        Rng { s }
    }

    /// Independent substream: `seed ^ split_mix64(stream)` keeps streams for
    /// different epochs (or different purposes) decorrelated while staying a
    /// pure function of `(seed, stream)`.
    pub fn for_stream(seed: u64, stream: u64) -> Self {
        Rng::new(seed ^ split_mix64(stream))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[1]
            .wrapping_mul(5)
            .rotate_left(7)
            .wrapping_mul(9);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[0, n)` by rejection, unbiased.
    pub fn next_below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "next_below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    /// Standard normal via Box-Muller (both values consumed for determinism).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.next_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.next_f64();
        let r = crate::fmath::sqrt(-2.0 * crate::fmath::ln(u1));
        let theta = 2.0 * core::f64::consts::PI * u2;
        r * libm::cos(theta)
    }
}
