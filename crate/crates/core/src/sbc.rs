//! Shrinking targets and strong Borel–Cantelli statistics.
//!
//! Target `n ≥ 0` is `S_n = B(x0, r_{k_min + n})` (or, for exact comparisons on the
//! doubling map, the dyadic interval of rank `k_min + n` containing `x0`). The
//! visit count is `Z_N(x) = #{1 ≤ n ≤ N : T^n x ∈ S_n}`.

use std::fmt;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;

use crate::correlation::{DecayClass, DecayModel};
use crate::dimension::MeasureSource;
use crate::error::{Error, Result};
use crate::hitting::{LadderKind, RadiusLadder};
use crate::measure::EmpiricalMeasure;
use crate::oracle::{exact_preimage_intersection, DyadicInterval};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stats::{least_squares, Moments};
use crate::systems::{distance, OrbitState, Point, SystemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetShape {
    Balls,
    /// Half-open dyadic intervals `[j·2^{-k}, (j+1)·2^{-k})` containing `x0`.
    Dyadic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetSequence<T> {
    x0: Point<T>,
    ladder: RadiusLadder,
    shape: TargetShape,
    /// Rank of `S_0` for dyadic targets.
    rank0: u64,
}

/// Ball targets along a strictly decreasing ladder.
pub fn build_targets<T: Scalar>(x0: Point<T>, ladder: RadiusLadder) -> Result<TargetSequence<T>> {
    if !ladder.is_strictly_decreasing() {
        return Err(Error::LadderNotDecreasing);
    }
    Ok(TargetSequence {
        x0,
        ladder,
        shape: TargetShape::Balls,
        rank0: 0,
    })
}

impl<T: Scalar> TargetSequence<T> {
    /// Dyadic intervals of rank `k_min + n` around a circle point. Rank 0 is the
    /// whole circle.
    pub fn dyadic(x0: Point<T>, k_min: u64, k_max: u64) -> Result<Self> {
        if x0.space() != crate::systems::Space::Circle {
            return Err(Error::InvalidPoint("dyadic targets live on the circle".into()));
        }
        if k_max < k_min || k_max > 62 {
            return Err(Error::InvalidLadder(format!("dyadic ranks [{k_min}, {k_max}] must be ordered and at most 62")));
        }
        // The ladder only records the range; radii come from the rank.
        let ladder = RadiusLadder::geometric(1.0, 0.5, 2, 2 + k_max - k_min)?;
        Ok(Self {
            x0,
            ladder,
            shape: TargetShape::Dyadic,
            rank0: k_min,
        })
    }

    /// Constant-radius balls. Not a shrinking sequence; used as a degenerate control.
    pub fn constant(x0: Point<T>, r: f64) -> Result<Self> {
        Ok(Self {
            x0,
            ladder: RadiusLadder::constant(r, 1, 1)?,
            shape: TargetShape::Balls,
            rank0: 0,
        })
    }

    pub fn x0(&self) -> &Point<T> {
        &self.x0
    }

    pub fn ladder(&self) -> &RadiusLadder {
        &self.ladder
    }

    pub fn shape(&self) -> TargetShape {
        self.shape
    }

    /// Number of targets in the ladder's own index range.
    pub fn len(&self) -> usize {
        self.ladder.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn rank(&self, n: u64) -> u32 {
        (self.rank0 + n) as u32
    }

    /// Radius (or dyadic length scale `2^{-rank}`) of target `n`.
    pub fn radius(&self, n: u64) -> f64 {
        match self.shape {
            TargetShape::Balls => self.ladder.radius(self.ladder.k_min() + n),
            TargetShape::Dyadic => 0.5f64.powi(self.rank(n) as i32),
        }
    }

    /// Dyadic interval of target `n`.
    pub fn interval(&self, n: u64) -> Option<DyadicInterval> {
        match self.shape {
            TargetShape::Balls => None,
            TargetShape::Dyadic => {
                let rank = self.rank(n);
                let index = (self.x0.x().to_f64_lossy() * 2f64.powi(rank as i32)).floor() as u64;
                DyadicInterval::new(rank, index).ok()
            }
        }
    }

    pub fn contains(&self, n: u64, p: &Point<T>) -> bool {
        match self.shape {
            TargetShape::Balls => distance(p, &self.x0) < T::from_f64(self.radius(n)),
            TargetShape::Dyadic => {
                let rank = self.rank(n);
                let scaled = p.x().to_f64_lossy() * 2f64.powi(rank as i32);
                let idx = self.interval(n).map(|i| i.index()).unwrap_or(u64::MAX);
                scaled.floor() as u64 == idx
            }
        }
    }

    /// `μ(S_n)`.
    pub fn measure(&self, n: u64, source: &MeasureSource<'_, T>) -> Result<f64> {
        match self.shape {
            TargetShape::Dyadic => Ok(self.radius(n)),
            TargetShape::Balls => source.ball_measure(&self.x0, self.radius(n)),
        }
    }

    /// `μ(S_0), ..., μ(S_n_max)`.
    pub fn measures(&self, n_max: u64, source: &MeasureSource<'_, T>) -> Result<Vec<f64>> {
        (0..=n_max).into_par_iter().map(|n| self.measure(n, source)).collect()
    }
}

/// `Z_N`, `E(Z_N)` and their ratio at a set of checkpoints along one orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct SbcSeries {
    pub checkpoints: Vec<u64>,
    pub z: Vec<u64>,
    pub ez: Vec<f64>,
    pub ratio: Vec<f64>,
    /// Set when `E(Z_N) < 10` at the last checkpoint.
    pub weak_divergence: bool,
}

/// Powers of ten up to `n_max`, plus `n_max`.
pub fn default_checkpoints(n_max: u64) -> Vec<u64> {
    let mut c: Vec<u64> = std::iter::successors(Some(10u64), |x| x.checked_mul(10))
        .take_while(|&x| x <= n_max)
        .collect();
    if c.last() != Some(&n_max) {
        c.push(n_max);
    }
    c
}

fn check_checkpoints(checkpoints: &[u64], n_max: u64) -> Result<()> {
    if checkpoints.is_empty()
        || checkpoints[0] == 0
        || checkpoints.windows(2).any(|w| w[0] >= w[1])
        || *checkpoints.last().unwrap() > n_max
    {
        return Err(Error::InvalidArgument(
            "checkpoints must be increasing, positive and at most n_max".into(),
        ));
    }
    Ok(())
}

/// Partial sums `E(Z_N) = Σ_{1≤n≤N} μ(S_n)` at the checkpoints.
fn expectations(measures: &[f64], checkpoints: &[u64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut acc = 0.0;
    let mut n = 0usize;
    for &c in checkpoints {
        while n < c as usize {
            n += 1;
            acc += measures[n];
        }
        out.push(acc);
    }
    out
}

/// Visit counts `Z_N` at the checkpoints along the orbit of `start`.
pub fn visit_counts<T: Scalar>(
    sys: &SystemSpec<T>,
    start: &OrbitState<T>,
    targets: &TargetSequence<T>,
    checkpoints: &[u64],
) -> Result<Vec<u64>> {
    let mut state = start.clone();
    let mut z = 0u64;
    let mut n = 0u64;
    let mut out = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        while n < c {
            sys.advance(&mut state)?;
            n += 1;
            if targets.contains(n, &sys.point(&state)) {
                z += 1;
            }
        }
        out.push(z);
    }
    Ok(out)
}

fn series_from(z: Vec<u64>, ez: Vec<f64>, checkpoints: Vec<u64>) -> SbcSeries {
    let ratio = z.iter().zip(&ez).map(|(&z, &e)| z as f64 / e).collect();
    let weak_divergence = ez.last().is_some_and(|&e| e < 10.0);
    SbcSeries {
        checkpoints,
        z,
        ez,
        ratio,
        weak_divergence,
    }
}

/// One-orbit strong Borel–Cantelli ratio `Z_N / E(Z_N)`.
pub fn sbc_series<T: Scalar>(
    sys: &SystemSpec<T>,
    start: &OrbitState<T>,
    targets: &TargetSequence<T>,
    source: &MeasureSource<'_, T>,
    checkpoints: &[u64],
) -> Result<SbcSeries> {
    let n_max = *checkpoints.last().ok_or_else(|| Error::InvalidArgument("no checkpoints".into()))?;
    check_checkpoints(checkpoints, n_max)?;
    let measures = targets.measures(n_max, source)?;
    let z = visit_counts(sys, start, targets, checkpoints)?;
    Ok(series_from(z, expectations(&measures, checkpoints), checkpoints.to_vec()))
}

/// Parameters of the variance bound
/// `(2N^α+1)E(Z_N) + 2N^{2+c1+c2}Φ(N^α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceBound {
    pub phi: DecayModel,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
}

impl VarianceBound {
    pub fn at(&self, n: f64, ez: f64) -> f64 {
        let na = n.powf(self.alpha);
        (2.0 * na + 1.0) * ez + 2.0 * n.powf(2.0 + self.c1 + self.c2) * self.phi.phi(na)
    }
}

/// Per-checkpoint ensemble statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleCheckpoint {
    pub n: u64,
    pub ez: f64,
    pub mean_ratio: f64,
    pub sd_ratio: f64,
    pub var_z: f64,
    pub bound: Option<f64>,
}

impl EnsembleCheckpoint {
    /// `Var(Z_N) / bound`.
    pub fn bound_ratio(&self) -> Option<f64> {
        self.bound.map(|b| self.var_z / b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SbcEnsemble {
    /// Per trial: `(trial, seed, series)`.
    pub trials: Vec<(u64, u64, SbcSeries)>,
    pub checkpoints: Vec<EnsembleCheckpoint>,
}

impl SbcEnsemble {
    /// Empirical variance within the bound at every checkpoint.
    pub fn bound_holds(&self) -> Option<bool> {
        self.checkpoints
            .iter()
            .map(|c| c.bound.map(|b| c.var_z <= b))
            .collect::<Option<Vec<bool>>>()
            .map(|v| v.into_iter().all(|ok| ok))
    }
}

pub const MIN_ENSEMBLE_TRIALS: u64 = 30;

/// Strong Borel–Cantelli statistics over `trials` Lebesgue-random orbits;
/// trial `t` starts from `sys.random_state(derive_seed(seed, t))`.
pub fn sbc_ensemble<T: Scalar>(
    sys: &SystemSpec<T>,
    targets: &TargetSequence<T>,
    source: &MeasureSource<'_, T>,
    checkpoints: &[u64],
    trials: u64,
    seed: u64,
    bound: Option<&VarianceBound>,
) -> Result<SbcEnsemble> {
    if trials < MIN_ENSEMBLE_TRIALS {
        return Err(Error::TooFewTrials {
            trials,
            required: MIN_ENSEMBLE_TRIALS,
        });
    }
    let n_max = *checkpoints.last().ok_or_else(|| Error::InvalidArgument("no checkpoints".into()))?;
    check_checkpoints(checkpoints, n_max)?;
    let measures = targets.measures(n_max, source)?;
    let ez = expectations(&measures, checkpoints);
    let runs: Vec<(u64, u64, SbcSeries)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = derive_seed(seed, t);
            let z = visit_counts(sys, &sys.random_state(s), targets, checkpoints)?;
            Ok((t, s, series_from(z, ez.clone(), checkpoints.to_vec())))
        })
        .collect::<Result<_>>()?;
    let stats = checkpoints
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let ratios: Moments = runs.iter().map(|r| r.2.ratio[i]).collect();
            let zs: Moments = runs.iter().map(|r| r.2.z[i] as f64).collect();
            EnsembleCheckpoint {
                n,
                ez: ez[i],
                mean_ratio: ratios.mean(),
                sd_ratio: ratios.sd(),
                var_z: zs.variance(),
                bound: bound.map(|b| b.at(n as f64, ez[i])),
            }
        })
        .collect();
    Ok(SbcEnsemble {
        trials: runs,
        checkpoints: stats,
    })
}

/// How `μ(A_k ∩ A_j)` is obtained.
#[derive(Clone, Copy, Debug)]
pub enum IntersectionMode<'a, T> {
    /// Exact rational from the dyadic oracle (doubling map, dyadic targets).
    Exact,
    /// Fraction of sample points `x` with `T^j x ∈ S_j` and `T^k x ∈ S_k`.
    Empirical(&'a EmpiricalMeasure<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingRecord {
    pub k: u64,
    pub j: u64,
    pub lhs: f64,
    pub lhs_exact: Option<BigRational>,
    pub lhs_se: Option<f64>,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Compare `μ(A_k ∩ A_j)` with
/// `μ(A_{k−1})μ(A_{j−1}) + Φ(k−j)/((r_{k−1}−r_k)(r_{j−1}−r_j))`, `A_n = T^{-n}S_n`.
/// For `j = 0` the factor `μ(A_{−1}) = μ(X) = 1` and its radius gap is 1.
pub fn mixing_bound_check<T: Scalar>(
    sys: &SystemSpec<T>,
    targets: &TargetSequence<T>,
    pairs: &[(u64, u64)],
    mode: IntersectionMode<'_, T>,
    source: &MeasureSource<'_, T>,
    phi: &DecayModel,
) -> Result<Vec<MixingRecord>> {
    if let Some(&(k, j)) = pairs.iter().find(|&&(k, j)| k <= j) {
        return Err(Error::InvalidArgument(format!("pair ({k}, {j}) needs k > j")));
    }
    let prev_measure = |n: u64| -> Result<f64> {
        if n == 0 {
            Ok(1.0)
        } else {
            targets.measure(n - 1, source)
        }
    };
    let gap = |n: u64| -> f64 {
        if n == 0 {
            1.0
        } else {
            targets.radius(n - 1) - targets.radius(n)
        }
    };
    let lhs: Vec<(f64, Option<BigRational>, Option<f64>)> = match mode {
        IntersectionMode::Exact => {
            if !matches!(sys.family(), crate::systems::Family::Doubling) {
                return Err(Error::InvalidSystem("exact intersections exist for the doubling map only".into()));
            }
            pairs
                .iter()
                .map(|&(k, j)| {
                    let (ik, ij) = targets
                        .interval(k)
                        .zip(targets.interval(j))
                        .ok_or_else(|| Error::InvalidArgument("exact intersections need dyadic targets".into()))?;
                    let v = exact_preimage_intersection(&ik, &ij, (k - j) as u32)?;
                    Ok((v.to_f64().unwrap_or(f64::NAN), Some(v), None))
                })
                .collect::<Result<_>>()?
        }
        IntersectionMode::Empirical(sample) => {
            let m = sample.len();
            let counts = joint_visits(sys, targets, pairs, sample)?;
            counts
                .into_iter()
                .map(|c| {
                    let p = c as f64 / m as f64;
                    (p, None, Some((p * (1.0 - p) / m as f64).sqrt()))
                })
                .collect()
        }
    };
    pairs
        .iter()
        .zip(lhs)
        .map(|(&(k, j), (lhs, lhs_exact, lhs_se))| {
            let rhs = prev_measure(k)? * prev_measure(j)? + phi.phi((k - j) as f64) / (gap(k) * gap(j));
            Ok(MixingRecord {
                k,
                j,
                lhs,
                lhs_exact,
                lhs_se,
                rhs,
                satisfied: lhs <= rhs,
            })
        })
        .collect()
}

/// For each pair `(k, j)`, the number of sample points with `T^j x ∈ S_j` and
/// `T^k x ∈ S_k`. Each orbit is walked once, up to the largest index.
fn joint_visits<T: Scalar>(
    sys: &SystemSpec<T>,
    targets: &TargetSequence<T>,
    pairs: &[(u64, u64)],
    sample: &EmpiricalMeasure<T>,
) -> Result<Vec<u64>> {
    let mut times: Vec<u64> = pairs.iter().flat_map(|&(k, j)| [k, j]).collect();
    times.sort_unstable();
    times.dedup();
    let slot = |n: u64| times.binary_search(&n).expect("index collected above");
    let pair_slots: Vec<(usize, usize)> = pairs.iter().map(|&(k, j)| (slot(k), slot(j))).collect();
    const CHUNK: usize = 4096;
    let m = sample.len();
    let partials: Vec<Result<Vec<u64>>> = (0..m.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![0u64; pairs.len()];
            let mut inside = vec![false; times.len()];
            for i in c * CHUNK..((c + 1) * CHUNK).min(m) {
                let mut st = sample.state(i)?;
                let mut at = 0;
                for (s, &n) in times.iter().enumerate() {
                    sys.advance_by(&mut st, n - at)?;
                    at = n;
                    inside[s] = targets.contains(n, &sys.point(&st));
                }
                for (count, &(sk, sj)) in counts.iter_mut().zip(&pair_slots) {
                    *count += (inside[sk] && inside[sj]) as u64;
                }
            }
            Ok(counts)
        })
        .collect();
    let mut total = vec![0u64; pairs.len()];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p?) {
            *t += v;
        }
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    SbcExpected,
    Inconclusive,
    Fails,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::SbcExpected => "SBC_expected",
            Verdict::Inconclusive => "inconclusive",
            Verdict::Fails => "fails",
        })
    }
}

/// Evaluation of the summability conditions for a ball sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct CorollaryReport {
    pub z: f64,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub alpha: f64,
    pub epsilon: f64,
    /// Symbolic verdict on `Σ n^{2−2c+ε} Φ(n^α) / (Σ_{i≤n} μ(S_i))²`.
    pub summable: bool,
    /// Fitted log–log slope of the series terms over the last decade of the partial sum.
    pub term_exponent: f64,
    pub partial_sum: f64,
    pub terms: u64,
    pub numeric_agrees: bool,
    pub verdict: Verdict,
}

impl fmt::Display for CorollaryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "z = {}", self.z)?;
        writeln!(f, "c = {}", self.c)?;
        writeln!(f, "c1 = {}", self.c1)?;
        writeln!(f, "c2 = {}", self.c2)?;
        writeln!(f, "alpha = {}", self.alpha)?;
        writeln!(f, "epsilon = {}", self.epsilon)?;
        writeln!(f, "summable = {}", self.summable)?;
        writeln!(f, "term_exponent = {}", self.term_exponent)?;
        writeln!(f, "partial_sum = {}", self.partial_sum)?;
        writeln!(f, "terms = {}", self.terms)?;
        writeln!(f, "numeric_agrees = {}", self.numeric_agrees)?;
        writeln!(f, "verdict = {}", self.verdict)
    }
}

/// Symbolic summability of `Σ n^{2−2c+ε−2z} Φ(n^α)`: always for exponential `Φ`,
/// and for `Φ(n) = C n^{-p}` iff `2 − 2c + ε − pα − 2z < −1` (`p = 0` without decay).
pub fn symbolic_summable(phi: &DecayModel, z: f64, c: f64, alpha: f64, epsilon: f64) -> Result<bool> {
    let p = match phi.class {
        DecayClass::Exponential { .. } => return Ok(true),
        DecayClass::Polynomial { exponent } => exponent,
        DecayClass::None => 0.0,
        DecayClass::Undetermined => return Err(Error::UndeterminedDecay),
    };
    Ok(2.0 - 2.0 * c + epsilon - p * alpha - 2.0 * z < -1.0)
}

/// Terms of the numerical summability check.
pub const COROLLARY_TERMS: u64 = 1_000_000;

/// Check the corollary's conditions for `targets` with `E(Z)` known up to `n_fit`.
///
/// `z` and `c` are least-squares slopes over `n ∈ [n_fit/2, n_fit]` of
/// `ln Σ_{i≤n} μ(S_i)` and `ln(r_{n−1} − r_n)` against `ln n`; `c1 = c2 = −c`.
/// Exact measure sources extend the numerical series to [`COROLLARY_TERMS`].
pub fn check_corollary<T: Scalar>(
    targets: &TargetSequence<T>,
    source: &MeasureSource<'_, T>,
    phi: &DecayModel,
    alpha: f64,
    epsilon: f64,
    n_fit: u64,
) -> Result<CorollaryReport> {
    if phi.class == DecayClass::Undetermined {
        return Err(Error::UndeterminedDecay);
    }
    if !(epsilon > 0.0) || !(alpha > 0.0) {
        return Err(Error::InvalidArgument("alpha and epsilon must be positive".into()));
    }
    if n_fit < 8 {
        return Err(Error::InvalidArgument("n_fit must be at least 8".into()));
    }
    if matches!(targets.ladder().kind(), LadderKind::Constant { .. }) {
        return Err(Error::LadderNotDecreasing);
    }
    let terms = match source {
        MeasureSource::Exact(_) => n_fit.max(COROLLARY_TERMS),
        MeasureSource::Empirical(_) => n_fit,
    };
    let measures = targets.measures(terms, source)?;
    let mut partial = Vec::with_capacity(measures.len());
    let mut acc = 0.0;
    for m in &measures {
        acc += m;
        partial.push(acc);
    }
    let lo = (n_fit / 2).max(1);
    let ns: Vec<f64> = (lo..=n_fit).map(|n| (n as f64).ln()).collect();
    let zs: Vec<f64> = (lo..=n_fit).map(|n| partial[n as usize].ln()).collect();
    let cs: Vec<f64> = (lo..=n_fit)
        .map(|n| (targets.radius(n - 1) - targets.radius(n)).ln())
        .collect();
    let z = least_squares(&ns, &zs).ok_or_else(|| Error::InvalidArgument("degenerate z fit".into()))?.slope;
    let c = least_squares(&ns, &cs).ok_or_else(|| Error::InvalidArgument("degenerate c fit".into()))?.slope;
    let summable = symbolic_summable(phi, z, c, alpha, epsilon)?;

    let term = |n: u64| -> f64 {
        let nf = n as f64;
        nf.powf(2.0 - 2.0 * c + epsilon) * phi.phi(nf.powf(alpha)) / (partial[n as usize] * partial[n as usize])
    };
    let partial_sum: f64 = (1..=terms).map(term).sum();
    // Local exponent of the terms over the last decade, on a log grid.
    let (mut lx, mut ly) = (Vec::new(), Vec::new());
    let start = (terms / 10).max(1) as f64;
    for i in 0..=50 {
        let n = (start * (terms as f64 / start).powf(i as f64 / 50.0)).round() as u64;
        let t = term(n.clamp(1, terms));
        if t > 0.0 && t.is_finite() {
            lx.push((n as f64).ln());
            ly.push(t.ln());
        }
    }
    let term_exponent = match least_squares(&lx, &ly) {
        Some(f) => f.slope,
        None => f64::NEG_INFINITY,
    };
    let numeric_agrees = summable == (term_exponent < -1.0);
    let verdict = if z <= 0.0 || !summable {
        Verdict::Fails
    } else if alpha < z / 2.0 {
        Verdict::SbcExpected
    } else {
        Verdict::Inconclusive
    };
    Ok(CorollaryReport {
        z,
        c,
        c1: -c,
        c2: -c,
        alpha,
        epsilon,
        summable,
        term_exponent,
        partial_sum,
        terms,
        numeric_agrees,
        verdict,
    })
}
