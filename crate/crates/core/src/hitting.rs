//! First-entrance times into shrinking balls and their log–log scaling.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::stats::least_squares;
use crate::systems::{distance, OrbitState, Point, SystemSpec};

/// How a ladder generates its radii.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LadderKind {
    /// `r_k = k^{-β}`.
    Power { beta: f64 },
    /// `r_k = r0 · λ^k`.
    Geometric { r0: f64, lambda: f64 },
    /// `r_k = r` for every `k`. Not a valid indicator ladder; only used as a
    /// degenerate target sequence.
    Constant { r: f64 },
}

/// A radius sequence `r_k`, `k ∈ [k_min, k_max]`, extendable past `k_max` by its formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusLadder {
    kind: LadderKind,
    k_min: u64,
    k_max: u64,
}

impl RadiusLadder {
    /// Power ladder. `k_min` is raised to the first index whose radius is below ½.
    pub fn power(beta: f64, k_min: u64, k_max: u64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::LadderNotDecreasing);
        }
        let mut k = k_min.max(1);
        while (k as f64).powf(-beta) >= 0.5 {
            k += 1;
        }
        Self::checked(LadderKind::Power { beta }, k, k_max)
    }

    pub fn geometric(r0: f64, lambda: f64, k_min: u64, k_max: u64) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::LadderNotDecreasing);
        }
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::InvalidLadder(format!("r0 = {r0} must be positive")));
        }
        Self::checked(LadderKind::Geometric { r0, lambda }, k_min, k_max)
    }

    /// `r_k = 2^{-k}`.
    pub fn dyadic(k_min: u64, k_max: u64) -> Result<Self> {
        Self::geometric(1.0, 0.5, k_min, k_max)
    }

    pub fn constant(r: f64, k_min: u64, k_max: u64) -> Result<Self> {
        Self::checked(LadderKind::Constant { r }, k_min, k_max)
    }

    fn checked(kind: LadderKind, k_min: u64, k_max: u64) -> Result<Self> {
        if k_min > k_max {
            return Err(Error::InvalidLadder(format!("empty index range [{k_min}, {k_max}]")));
        }
        let ladder = Self { kind, k_min, k_max };
        let r = ladder.radius(k_min);
        if !(r > 0.0 && r < 0.5) {
            return Err(Error::InvalidLadder(format!("r_{k_min} = {r} is outside (0, 1/2)")));
        }
        if ladder.radius(k_max) <= 0.0 {
            return Err(Error::InvalidLadder(format!("r_{k_max} underflows")));
        }
        Ok(ladder)
    }

    pub fn kind(&self) -> LadderKind {
        self.kind
    }

    pub fn k_min(&self) -> u64 {
        self.k_min
    }

    pub fn k_max(&self) -> u64 {
        self.k_max
    }

    pub fn len(&self) -> usize {
        (self.k_max - self.k_min + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_strictly_decreasing(&self) -> bool {
        !matches!(self.kind, LadderKind::Constant { .. })
    }

    /// `r_k` for any `k ≥ 1` (not only inside `[k_min, k_max]`).
    pub fn radius(&self, k: u64) -> f64 {
        match self.kind {
            LadderKind::Power { beta } => (k as f64).powf(-beta),
            LadderKind::Geometric { r0, lambda } => r0 * lambda.powf(k as f64),
            LadderKind::Constant { r } => r,
        }
    }

    /// `(k, r_k)` over the index range.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        (self.k_min..=self.k_max).map(|k| (k, self.radius(k)))
    }

    /// The same ladder over another index range.
    pub fn with_range(&self, k_min: u64, k_max: u64) -> Result<Self> {
        Self::checked(self.kind, k_min, k_max)
    }
}

impl fmt::Display for RadiusLadder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LadderKind::Power { beta } => write!(f, "power:beta={beta}")?,
            LadderKind::Geometric { r0, lambda } => write!(f, "geometric:r0={r0},lambda={lambda}")?,
            LadderKind::Constant { r } => write!(f, "constant:r={r}")?,
        }
        write!(f, ",k={}..{}", self.k_min, self.k_max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tau {
    Hit(u64),
    /// No entrance within the cap.
    Censored(u64),
}

impl Tau {
    pub fn value(&self) -> Option<u64> {
        match *self {
            Tau::Hit(n) => Some(n),
            Tau::Censored(_) => None,
        }
    }

    pub fn is_censored(&self) -> bool {
        matches!(self, Tau::Censored(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingRecord {
    pub radius: f64,
    pub tau: Tau,
}

fn check_radius(r: f64) -> Result<()> {
    if r > 0.0 && r < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidRadius(r))
    }
}

fn check_cap(n_max: u64) -> Result<()> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    Ok(())
}

/// `τ_r(x, x0)`: least `n ∈ [1, n_max]` with `d(T^n x, x0) < r`.
pub fn hitting_time<T: Scalar>(
    sys: &SystemSpec<T>,
    start: &OrbitState<T>,
    x0: &Point<T>,
    r: &T,
    n_max: u64,
) -> Result<HittingRecord> {
    check_radius(r.to_f64_lossy())?;
    check_cap(n_max)?;
    let mut state = start.clone();
    let base = state.steps();
    for n in 1..=n_max {
        sys.advance(&mut state)?;
        if distance(&sys.point(&state), x0) < *r {
            return Ok(HittingRecord {
                radius: r.to_f64_lossy(),
                tau: Tau::Hit(n),
            });
        }
        debug_assert_eq!(state.steps(), base + n);
    }
    Ok(HittingRecord {
        radius: r.to_f64_lossy(),
        tau: Tau::Censored(n_max),
    })
}

/// Hitting times for every radius of the ladder along one orbit. Radii shrink,
/// so each search resumes where the previous one stopped.
pub fn hitting_scan<T: Scalar>(
    sys: &SystemSpec<T>,
    start: &OrbitState<T>,
    x0: &Point<T>,
    ladder: &RadiusLadder,
    n_max: u64,
) -> Result<Vec<HittingRecord>> {
    check_cap(n_max)?;
    if !ladder.is_strictly_decreasing() {
        return Err(Error::LadderNotDecreasing);
    }
    let mut state = start.clone();
    sys.advance(&mut state)?;
    let mut n = 1u64;
    let mut current = sys.point(&state);
    let mut records = Vec::with_capacity(ladder.len());
    let mut censored = false;
    for (_, rf) in ladder.iter() {
        check_radius(rf)?;
        let r = T::from_f64(rf);
        if !censored {
            loop {
                if distance(&current, x0) < r {
                    break;
                }
                if n == n_max {
                    censored = true;
                    break;
                }
                sys.advance(&mut state)?;
                n += 1;
                current = sys.point(&state);
            }
        }
        let tau = if censored { Tau::Censored(n_max) } else { Tau::Hit(n) };
        records.push(HittingRecord { radius: rf, tau });
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Hitting,
    Dimension,
}

/// Log–log scaling fit over the smallest radii of a ladder.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingEstimate {
    pub role: Role,
    /// `(ln r_k, ln v_k)` with `v = τ` (hitting) or `v = μ(B)` (dimension).
    pub points: Vec<(f64, f64)>,
    pub slope_ls: f64,
    pub slope_upper: f64,
    pub slope_lower: f64,
    pub tail_window: usize,
    pub infinite: bool,
}

impl ScalingEstimate {
    /// Fit the last `tail_window` points. Slopes are taken against `-ln r`
    /// for hitting times and against `ln r` for ball measures, so both are positive.
    pub fn fit(role: Role, points: Vec<(f64, f64)>, tail_window: usize) -> Result<Self> {
        if tail_window < 2 || tail_window > points.len() {
            return Err(Error::InvalidArgument(format!(
                "tail window {tail_window} must lie in [2, {}]",
                points.len()
            )));
        }
        let sign = match role {
            Role::Hitting => -1.0,
            Role::Dimension => 1.0,
        };
        let tail = &points[points.len() - tail_window..];
        let xs: Vec<f64> = tail.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = tail.iter().map(|p| p.1).collect();
        let fit = least_squares(&xs, &ys)
            .ok_or_else(|| Error::InvalidLadder("tail radii are not distinct".into()))?;
        let pair_slopes: Vec<f64> = tail
            .windows(2)
            .map(|w| sign * (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
            .collect();
        let slope_upper = pair_slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slope_lower = pair_slopes.iter().copied().fold(f64::INFINITY, f64::min);
        let slope_ls = (sign * fit.slope).clamp(slope_lower, slope_upper);
        Ok(Self {
            role,
            points,
            slope_ls,
            slope_upper,
            slope_lower,
            tail_window,
            infinite: false,
        })
    }

    /// Every slope set to `d`; for measures known in closed form as `c·r^d`.
    pub fn exact(role: Role, points: Vec<(f64, f64)>, tail_window: usize, d: f64) -> Self {
        Self {
            role,
            points,
            slope_ls: d,
            slope_upper: d,
            slope_lower: d,
            tail_window,
            infinite: false,
        }
    }

    /// The indicator is infinite by convention when the tail has censored records.
    pub fn infinite(role: Role, points: Vec<(f64, f64)>, tail_window: usize) -> Self {
        Self {
            role,
            points,
            slope_ls: f64::INFINITY,
            slope_upper: f64::INFINITY,
            slope_lower: f64::INFINITY,
            tail_window,
            infinite: true,
        }
    }
}

/// Records and fitted indicator of one orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorRun {
    pub records: Vec<HittingRecord>,
    pub estimate: ScalingEstimate,
}

/// Hitting-time indicators `R̄(x, x0)`, `R̲(x, x0)` over the tail of a ladder.
pub fn hitting_indicator<T: Scalar>(
    sys: &SystemSpec<T>,
    start: &OrbitState<T>,
    x0: &Point<T>,
    ladder: &RadiusLadder,
    n_max: u64,
    tail_window: usize,
) -> Result<IndicatorRun> {
    if tail_window > ladder.len() {
        return Err(Error::InvalidArgument(format!(
            "tail window {tail_window} exceeds ladder length {}",
            ladder.len()
        )));
    }
    let records = hitting_scan(sys, start, x0, ladder, n_max)?;
    let tail_censored = records[records.len() - tail_window..].iter().any(|r| r.tau.is_censored());
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| r.tau.value().map(|t| (r.radius.ln(), (t as f64).ln())))
        .collect();
    let estimate = if tail_censored {
        ScalingEstimate::infinite(Role::Hitting, points, tail_window)
    } else {
        ScalingEstimate::fit(Role::Hitting, points, tail_window)?
    };
    Ok(IndicatorRun { records, estimate })
}

/// Quantitative recurrence: the hitting indicator with `x0` the starting point itself.
pub fn recurrence_indicator<T: Scalar>(
    sys: &SystemSpec<T>,
    start: &OrbitState<T>,
    ladder: &RadiusLadder,
    n_max: u64,
    tail_window: usize,
) -> Result<IndicatorRun> {
    let x = sys.point(start);
    hitting_indicator(sys, start, &x, ladder, n_max, tail_window)
}

/// Running minimum of `m^{1/α} d(T^m x, x0)` over `skip < m ≤ n`, recorded at
/// every `n` where it drops, plus the final `n`.
pub fn approach_rate<T: Scalar>(
    sys: &SystemSpec<T>,
    start: &OrbitState<T>,
    x0: &Point<T>,
    alpha: f64,
    n: u64,
    skip: u64,
) -> Result<Vec<(u64, f64)>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument("alpha must be positive".into()));
    }
    check_cap(n)?;
    if skip >= n {
        return Err(Error::InvalidArgument("skip must be below n".into()));
    }
    let mut state = start.clone();
    sys.advance_by(&mut state, skip)?;
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for m in skip + 1..=n {
        sys.advance(&mut state)?;
        let d = distance(&sys.point(&state), x0).to_f64_lossy();
        let v = if d == 0.0 { 0.0 } else { (m as f64).powf(1.0 / alpha) * d };
        if v < best {
            best = v;
            out.push((m, v));
        }
    }
    if out.last().map(|&(m, _)| m) != Some(n) {
        out.push((n, best));
    }
    Ok(out)
}
