//! Seed management and the seeded fair-bit tape used by the exact doubling backend.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed number `index` of `base`. Distinct indices give decorrelated streams.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index.wrapping_mul(GOLDEN_GAMMA).wrapping_add(0x5851_F42D)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Clone, Debug)]
enum Tail {
    Seeded(Box<ChaCha8Rng>),
    Periodic(Vec<bool>),
}

/// An infinite bit sequence `b_1 b_2 ...` read as the binary expansion of a point
/// in `[0, 1)`. Words are generated on demand and cached, so any index can be
/// re-read and always gives the same bit.
#[derive(Clone, Debug)]
pub struct BitTape {
    seed: Option<u64>,
    prefix: Vec<bool>,
    tail: Tail,
    /// Bit `i` (0-based) is bit `63 - i % 64` of `words[i / 64]`.
    words: Vec<u64>,
}

impl BitTape {
    /// Fair bits from a ChaCha8 stream keyed by `seed`.
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            prefix: Vec::new(),
            tail: Tail::Seeded(Box::new(rng_from_seed(seed))),
            words: Vec::new(),
        }
    }

    /// Explicit leading bits followed by seeded fair bits.
    pub fn with_prefix(prefix: &[bool], seed: u64) -> Self {
        Self {
            seed: Some(seed),
            prefix: prefix.to_vec(),
            tail: Tail::Seeded(Box::new(rng_from_seed(seed))),
            words: Vec::new(),
        }
    }

    /// Pattern repeated forever (e.g. `[false, true]` is `0.0101... = 1/3`).
    pub fn periodic(pattern: &[bool]) -> Self {
        assert!(!pattern.is_empty(), "periodic tape needs a nonempty pattern");
        Self {
            seed: None,
            prefix: Vec::new(),
            tail: Tail::Periodic(pattern.to_vec()),
            words: Vec::new(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Number of bits currently cached.
    pub fn cached_bits(&self) -> u64 {
        self.words.len() as u64 * 64
    }

    /// Make sure bits `0..n` are cached.
    pub fn ensure(&mut self, n: u64) {
        let need = n.div_ceil(64) as usize;
        while self.words.len() < need {
            let w = self.next_word();
            self.words.push(w);
        }
    }

    fn next_word(&mut self) -> u64 {
        let start = self.words.len() as u64 * 64;
        let plen = self.prefix.len() as u64;
        if plen == 0 {
            if let Tail::Seeded(rng) = &mut self.tail {
                return rng.next_u64();
            }
        }
        // Slow path: bitwise composition of prefix and tail.
        let mut word = 0u64;
        for j in 0..64 {
            let i = start + j;
            let bit = if i < plen {
                self.prefix[i as usize]
            } else {
                self.tail_bit(i - plen)
            };
            word = (word << 1) | bit as u64;
        }
        word
    }

    fn tail_bit(&mut self, i: u64) -> bool {
        match &mut self.tail {
            Tail::Periodic(p) => p[(i % p.len() as u64) as usize],
            Tail::Seeded(rng) => {
                // Tail words are drawn in order; `i` advances monotonically here.
                let word_pos = (i / 64) as u128 * 2;
                rng.set_word_pos(word_pos);
                let w = rng.next_u64();
                (w >> (63 - i % 64)) & 1 == 1
            }
        }
    }

    /// Bit `i` (0-based; the first binary digit of the point is bit 0).
    pub fn bit(&mut self, i: u64) -> bool {
        self.ensure(i + 1);
        self.bit_cached(i)
    }

    pub fn bit_cached(&self, i: u64) -> bool {
        (self.words[(i / 64) as usize] >> (63 - i % 64)) & 1 == 1
    }

    /// `len ≤ 64` bits starting at `start`, most significant first.
    pub fn window(&mut self, start: u64, len: u32) -> u64 {
        self.ensure(start + len as u64);
        self.window_cached(start, len)
    }

    /// As [`window`](Self::window) but requires the bits to be cached already.
    pub fn window_cached(&self, start: u64, len: u32) -> u64 {
        debug_assert!(len <= 64);
        if len == 0 {
            return 0;
        }
        let w = (start / 64) as usize;
        let off = (start % 64) as u32;
        let hi = self.words[w];
        let joined = if off == 0 {
            hi
        } else {
            let lo = self.words.get(w + 1).copied().unwrap_or(0);
            (hi << off) | (lo >> (64 - off))
        };
        joined >> (64 - len)
    }

    /// First `n` bits packed most significant first into words.
    pub fn prefix_words(&mut self, n: u64) -> Vec<u64> {
        self.ensure(n);
        let mut out = self.words[..n.div_ceil(64) as usize].to_vec();
        let rem = n % 64;
        if rem != 0 {
            let last = out.len() - 1;
            out[last] &= !0u64 << (64 - rem);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rereads_are_stable() {
        let mut t = BitTape::seeded(11);
        let first: Vec<bool> = (0..300).map(|i| t.bit(i)).collect();
        let again: Vec<bool> = (0..300).map(|i| t.bit(i)).collect();
        assert_eq!(first, again);
        let mut u = BitTape::seeded(11);
        assert_eq!(u.window(100, 64), t.window(100, 64));
    }

    #[test]
    fn distinct_seeds_differ() {
        let mut a = BitTape::seeded(1);
        let mut b = BitTape::seeded(2);
        assert_ne!(a.window(0, 64), b.window(0, 64));
    }

    #[test]
    fn prefix_then_seeded_tail() {
        let mut t = BitTape::with_prefix(&[false, true, true, true, false], 3);
        assert_eq!(t.window(0, 5), 0b01110);
        let mut plain = BitTape::seeded(3);
        // tail bit j of the prefixed tape is bit j of the plain seeded tape
        for j in 0..200 {
            assert_eq!(t.bit(5 + j), plain.bit(j));
        }
    }

    #[test]
    fn periodic_tape_and_windows() {
        let mut t = BitTape::periodic(&[false, true]);
        assert_eq!(t.window(0, 4), 0b0101);
        assert_eq!(t.window(63, 4), 0b1010);
        assert_eq!(t.window(1, 64), 0xAAAA_AAAA_AAAA_AAAA);
    }

    #[test]
    fn fair_bits_are_balanced() {
        let mut t = BitTape::seeded(99);
        let ones = (0..100_000).filter(|&i| t.bit(i)).count() as f64;
        // 5 standard deviations of a fair coin over 1e5 flips
        assert!((ones - 50_000.0).abs() < 5.0 * 158.2);
    }

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (0..10_000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(seeds.len(), 10_000);
    }
}
