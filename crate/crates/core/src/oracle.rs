//! Exact ground truth for the doubling map on dyadic data. Integer and rational
//! arithmetic only.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::hitting::{hitting_time, HittingRecord, Tau};
use crate::rng::BitTape;
use crate::systems::{Backend, Family, Point, SystemSpec};

/// Largest shift the branch enumeration accepts.
pub const MAX_SHIFT: u32 = 24;
/// Largest dyadic rank handled.
pub const MAX_RANK: u32 = 40;

/// `[index·2^{-rank}, (index+1)·2^{-rank})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DyadicInterval {
    rank: u32,
    index: u64,
}

impl DyadicInterval {
    pub fn new(rank: u32, index: u64) -> Result<Self> {
        if rank > MAX_RANK || index >> rank != 0 {
            return Err(Error::InvalidArgument(format!(
                "dyadic interval needs rank ≤ {MAX_RANK} and index < 2^rank, got rank {rank}, index {index}"
            )));
        }
        Ok(Self { rank, index })
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn measure(&self) -> BigRational {
        dyadic_ratio(1, self.rank)
    }

    /// The two rank+1 halves.
    pub fn children(&self) -> [Self; 2] {
        [
            Self { rank: self.rank + 1, index: 2 * self.index },
            Self { rank: self.rank + 1, index: 2 * self.index + 1 },
        ]
    }

    /// Every interval of this rank.
    pub fn all_of_rank(rank: u32) -> impl Iterator<Item = Self> {
        (0..1u64 << rank).map(move |index| Self { rank, index })
    }

    /// Whether a point with leading binary digits `bits` (most significant first,
    /// `width` of them, `width ≥ rank`) lies in the interval.
    pub fn contains_prefix(&self, bits: u64, width: u32) -> bool {
        debug_assert!(width >= self.rank);
        (bits >> (width - self.rank)) == self.index
    }
}

fn dyadic_ratio(count: u64, log2_den: u32) -> BigRational {
    BigRational::new(BigInt::from(count), BigInt::from(BigUint::one() << log2_den as usize))
}

/// `μ(T^{-m} I ∩ J) = count · 2^{-log2_den}`, as the integer pair `(count, log2_den)`.
///
/// `T^{-m} I` is the union of the `2^m` rank-`(rank I + m)` intervals with
/// indices `b·2^{rank I} + index I`. Only branches meeting `J` are visited.
pub fn preimage_intersection_units(i: &DyadicInterval, j: &DyadicInterval, m: u32) -> Result<(u64, u32)> {
    if m > MAX_SHIFT {
        return Err(Error::BranchBudgetExceeded { shift: m });
    }
    let rank = i.rank + m;
    if rank > 62 {
        return Err(Error::InvalidArgument(format!("rank {} + shift {m} exceeds 62", i.rank)));
    }
    if rank >= j.rank {
        // Branches are finer than J: count those lying inside it.
        let span = rank - j.rank;
        let lo = j.index << span;
        let hi = (j.index + 1) << span;
        let step = 1u64 << i.rank;
        let first_b = lo.saturating_sub(i.index).div_ceil(step);
        let mut count = 0u64;
        let mut b = first_b;
        while b < (1u64 << m) {
            let branch = b * step + i.index;
            if branch >= hi {
                break;
            }
            if branch >= lo {
                count += 1;
            }
            b += 1;
        }
        Ok((count, rank))
    } else {
        // J is finer than every branch: it lies in exactly one, or in none.
        let parent = j.index >> (j.rank - rank);
        let hit = parent & ((1u64 << i.rank) - 1) == i.index;
        Ok((hit as u64, j.rank))
    }
}

/// Exact `μ(T^{-m} I ∩ J)` under Lebesgue measure.
pub fn exact_preimage_intersection(i: &DyadicInterval, j: &DyadicInterval, m: u32) -> Result<BigRational> {
    let (count, log2_den) = preimage_intersection_units(i, j, m)?;
    Ok(dyadic_ratio(count, log2_den))
}

/// Exact hitting time of `B(0, 2^{-m})` for the point whose binary digits are the
/// tape: `T^n x` is in the ball iff digits `n+1 ..= n+m` all agree.
pub fn exact_hitting_bitstream(tape: &mut BitTape, m: u32, n_max: u64) -> Result<HittingRecord> {
    if m == 0 || m > 63 {
        return Err(Error::InvalidArgument(format!("ball rank {m} must lie in [1, 63]")));
    }
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let radius = 0.5f64.powi(m as i32);
    // Digit p+1 of x is tape bit p; windows start at tape bit n ≥ 1.
    let mut run = 0u64;
    let mut prev = None;
    let last = n_max + m as u64 - 1;
    tape.ensure(last + 1);
    for p in 1..=last {
        let b = tape.bit_cached(p);
        run = if prev == Some(b) { run + 1 } else { 1 };
        prev = Some(b);
        if run >= m as u64 {
            return Ok(HittingRecord {
                radius,
                tau: Tau::Hit(p + 1 - m as u64),
            });
        }
    }
    Ok(HittingRecord {
        radius,
        tau: Tau::Censored(n_max),
    })
}

/// Mean of the exact bitstream hitting time of `B(0, 2^{-m})` over Lebesgue-random
/// tapes, from the run-length automaton. Equals `2^m − m`.
pub fn expected_bitstream_hitting_time(m: u32) -> BigRational {
    assert!(m >= 1);
    // E_k: expected further digits with a current run of length k; E_m = 0 and
    // E_k = 1 + E_{k+1}/2 + E_1/2. Write E_k = a_k + c_k·E_1.
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let mut a = BigRational::zero();
    let mut c = BigRational::zero();
    for _ in 1..m {
        a = BigRational::one() + &half * &a;
        c = &half * &c + &half;
    }
    let e1 = a / (BigRational::one() - c);
    // One digit starts the first run; the run ending at digit D starts at D − m + 1.
    let digits = BigRational::one() + e1;
    digits - BigRational::from_integer(BigInt::from(m)) + BigRational::one()
}

/// Hitting times of `B(0, 2^{-m})` from the fixed-point backend and from the
/// exact tape rule, started from the same seeded tape. Agreement returns the
/// shared record; the first disagreement is an error.
pub fn crosscheck_backends(seed: u64, m: u32, n_max: u64, bit_budget: u32) -> Result<HittingRecord> {
    if m < 2 {
        return Err(Error::InvalidRadius(0.5f64.powi(m as i32)));
    }
    let mut tape = BitTape::seeded(seed);
    let exact = exact_hitting_bitstream(&mut tape, m, n_max)?;
    let sys = SystemSpec::<f64>::new(Family::Doubling, Backend::Fixed { bit_budget })?;
    let start = sys.start_tape(BitTape::seeded(seed))?;
    let fixed = hitting_time(&sys, &start, &Point::circle(0.0), &exact.radius, n_max)?;
    if fixed.tau != exact.tau {
        let step = match (fixed.tau.value(), exact.tau.value()) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => n_max,
        };
        return Err(Error::BackendMismatch {
            step,
            detail: format!("seed {seed}, m {m}: fixed {:?} vs tape {:?}", fixed.tau, exact.tau),
        });
    }
    Ok(exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn iv(rank: u32, index: u64) -> DyadicInterval {
        DyadicInterval::new(rank, index).unwrap()
    }

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn hand_enumerated_example() {
        assert_eq!(exact_preimage_intersection(&iv(2, 0), &iv(2, 0), 1).unwrap(), r(1, 8));
    }

    #[test]
    fn identity_shift() {
        for rank in 0..6 {
            for i in DyadicInterval::all_of_rank(rank) {
                assert_eq!(exact_preimage_intersection(&i, &i, 0).unwrap(), i.measure());
            }
        }
    }

    #[test]
    fn dyadic_target_pair() {
        // S_8 = [0, 2^-8), S_3 = [0, 2^-3): independent after 5 shifts.
        let v = exact_preimage_intersection(&iv(8, 0), &iv(3, 0), 5).unwrap();
        assert_eq!(v, r(1, 1 << 11));
    }

    #[test]
    fn branch_budget() {
        assert_eq!(
            exact_preimage_intersection(&iv(1, 0), &iv(1, 0), 25),
            Err(Error::BranchBudgetExceeded { shift: 25 })
        );
        assert!(exact_preimage_intersection(&iv(1, 0), &iv(1, 0), 24).is_ok());
    }

    #[test]
    fn bitstream_examples() {
        let mut t = BitTape::with_prefix(&[false, true, true, true, false], 1);
        assert_eq!(exact_hitting_bitstream(&mut t, 3, 100).unwrap().tau, Tau::Hit(1));
        let mut alt = BitTape::periodic(&[true, false]);
        assert_eq!(exact_hitting_bitstream(&mut alt, 2, 1000).unwrap().tau, Tau::Censored(1000));
    }

    #[test]
    fn automaton_mean() {
        for m in 1..20u32 {
            let expect = BigRational::from_integer(BigInt::from((1i64 << m) - m as i64));
            assert_eq!(expected_bitstream_hitting_time(m), expect);
        }
    }

    #[test]
    fn ensemble_mean_matches_automaton() {
        let m = 10;
        let taus: Vec<f64> = (0..1000)
            .map(|s| exact_hitting_bitstream(&mut BitTape::seeded(s), m, 1 << 20).unwrap().tau.value().unwrap() as f64)
            .collect();
        let mean = taus.iter().sum::<f64>() / taus.len() as f64;
        let sd = (taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 999.0).sqrt();
        assert!((mean - 1014.0).abs() < 4.0 * sd / 1000f64.sqrt(), "mean {mean}");
    }

    #[test]
    fn crosscheck_examples() {
        crosscheck_backends(1, 8, 10_000, 10_064).unwrap();
        assert!(matches!(crosscheck_backends(1, 30, 10_000, 200), Err(Error::PrecisionExhausted { .. })));
        assert!(crosscheck_backends(1, 1, 100, 200).is_err());
    }

    proptest! {
        #[test]
        fn independence_when_j_is_coarse(ri in 0u32..8, rj in 0u32..8, m in 0u32..10, a in any::<u64>(), b in any::<u64>()) {
            prop_assume!(rj <= m);
            let i = iv(ri, a % (1 << ri));
            let j = iv(rj, b % (1 << rj));
            prop_assert_eq!(exact_preimage_intersection(&i, &j, m).unwrap(), i.measure() * j.measure());
        }

        #[test]
        fn complement_identity(ri in 0u32..6, rj in 0u32..6, m in 0u32..8, a in any::<u64>(), b in any::<u64>()) {
            let i = iv(ri, a % (1 << ri));
            let j = iv(rj, b % (1 << rj));
            let inside = exact_preimage_intersection(&i, &j, m).unwrap();
            let outside = DyadicInterval::all_of_rank(rj)
                .filter(|k| *k != j)
                .map(|k| exact_preimage_intersection(&i, &k, m).unwrap())
                .fold(BigRational::zero(), |acc, v| acc + v);
            prop_assert_eq!(inside + outside, i.measure());
        }

        #[test]
        fn additivity_over_children(ri in 0u32..10, rj in 0u32..10, m in 0u32..12, a in any::<u64>(), b in any::<u64>()) {
            let i = iv(ri, a % (1 << ri));
            let j = iv(rj, b % (1 << rj));
            let whole = exact_preimage_intersection(&i, &j, m).unwrap();
            let [c0, c1] = i.children();
            let parts = exact_preimage_intersection(&c0, &j, m).unwrap() + exact_preimage_intersection(&c1, &j, m).unwrap();
            prop_assert_eq!(whole.clone(), parts);
            let [d0, d1] = j.children();
            let parts = exact_preimage_intersection(&i, &d0, m).unwrap() + exact_preimage_intersection(&i, &d1, m).unwrap();
            prop_assert_eq!(whole, parts);
        }
    }
}
