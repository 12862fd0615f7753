//! Self-verification: exact definition-level invariants and oracle crosschecks.

use std::fmt;

use rand::Rng;

use crate::correlation::{correlation_series, Observable};
use crate::dimension::MeasureSource;
use crate::error::Result;
use crate::hitting::{hitting_time, Tau};
use crate::measure::{sample_measure, SampleMethod};
use crate::oracle::{crosscheck_backends, expected_bitstream_hitting_time, preimage_intersection_units, DyadicInterval};
use crate::rng::{derive_seed, rng_from_seed};
use crate::systems::{distance, Family, Point, Space, SystemSpec, GUARD_BITS};

/// Outcome of one family of checks.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub cases: u64,
    pub failures: u64,
    /// First failing case, if any.
    pub first_failure: Option<String>,
}

impl Check {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            cases: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn record(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(what());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.cases > 0
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} cases, {} failures",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures
        )?;
        if let Some(w) = &self.first_failure {
            write!(f, " (first: {w})")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Orbits per system for the hitting-time checks.
    pub trials: u64,
    pub lipschitz_pairs: u64,
    pub crosscheck_seeds: u64,
    pub crosscheck_n_max: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 200,
            lipschitz_pairs: 100_000,
            crosscheck_seeds: 100,
            crosscheck_n_max: 10_000,
        }
    }
}

fn test_systems() -> Vec<SystemSpec<f64>> {
    ["doubling", "tent", "cat", "rotation:alpha=golden", "manneville_pomeau:s=0.5"]
        .iter()
        .map(|s| s.parse().expect("built-in system spec"))
        .collect()
}

fn ladder_radius(k: u32) -> f64 {
    0.5f64.powi(2 + k as i32)
}

/// `τ(T x) = τ(x) − 1` whenever `τ(x) ≥ 2`; a censored `x` leaves `T x` censored or hitting at `n_max`.
pub fn shift_identity(cfg: &VerifyConfig) -> Result<Check> {
    let mut check = Check::new("hitting-time shift identity");
    let n_max = 5_000;
    for (s, sys) in test_systems().iter().enumerate() {
        for t in 0..cfg.trials {
            let seed = derive_seed(cfg.seed, (s as u64) << 32 | t);
            let x0 = sys.point(&sys.random_state(seed ^ 0x5eed));
            let start = sys.random_state(seed);
            let r = ladder_radius((t % 6) as u32);
            let tau = hitting_time(sys, &start, &x0, &r, n_max)?.tau;
            let mut next = start.clone();
            sys.advance(&mut next)?;
            let tau1 = hitting_time(sys, &next, &x0, &r, n_max)?.tau;
            let ok = match tau {
                Tau::Hit(1) => true,
                Tau::Hit(n) => tau1 == Tau::Hit(n - 1),
                Tau::Censored(_) => matches!(tau1, Tau::Censored(_)) || tau1 == Tau::Hit(n_max),
            };
            check.record(ok, || format!("{sys} seed {seed}: τ(x) = {tau:?}, τ(Tx) = {tau1:?}"));
        }
    }
    Ok(check)
}

fn tau_key(t: Tau) -> u64 {
    match t {
        Tau::Hit(n) => n,
        Tau::Censored(_) => u64::MAX,
    }
}

/// Smaller balls are hit no earlier, and have no larger measure.
pub fn nesting_monotonicity(cfg: &VerifyConfig) -> Result<Check> {
    let mut check = Check::new("ball-nesting monotonicity");
    let n_max = 5_000;
    for (s, sys) in test_systems().iter().enumerate() {
        let sample = sample_measure(sys, 5_000, SampleMethod::IidLebesgue { seed: derive_seed(cfg.seed, s as u64) })?;
        let sources = [MeasureSource::Exact(sys.space()), MeasureSource::Empirical(&sample)];
        for t in 0..cfg.trials / 4 {
            let seed = derive_seed(cfg.seed ^ 0xa5a5, (s as u64) << 32 | t);
            let mut rng = rng_from_seed(seed);
            let x0 = sys.point(&sys.random_state(seed ^ 0x5eed));
            let start = sys.random_state(seed);
            let mut radii: Vec<f64> = (0..6).map(|_| rng.random_range(1e-3..0.49)).collect();
            radii.sort_by(f64::total_cmp);
            let mut taus = Vec::new();
            for r in &radii {
                taus.push(hitting_time(sys, &start, &x0, r, n_max)?.tau);
            }
            for w in 0..radii.len() - 1 {
                let (a, b) = (taus[w], taus[w + 1]);
                check.record(tau_key(a) >= tau_key(b), || {
                    format!("{sys} seed {seed}: τ at r={} is {a:?}, at r={} is {b:?}", radii[w], radii[w + 1])
                });
                for src in &sources {
                    let (m1, m2) = (src.ball_measure(&x0, radii[w])?, src.ball_measure(&x0, radii[w + 1])?);
                    check.record(m1 <= m2, || format!("{sys}: μ(B(r={})) = {m1} > μ(B(r={})) = {m2}", radii[w], radii[w + 1]));
                }
            }
        }
    }
    Ok(check)
}

/// Censored searches really miss the ball up to `n_max`, hits are first entries,
/// and a longer search never contradicts a shorter one.
pub fn censoring_consistency(cfg: &VerifyConfig) -> Result<Check> {
    let mut check = Check::new("censoring consistency");
    let n_max = 200;
    for (s, sys) in test_systems().iter().enumerate() {
        for t in 0..cfg.trials {
            let seed = derive_seed(cfg.seed ^ 0xc3c3, (s as u64) << 32 | t);
            let x0 = sys.point(&sys.random_state(seed ^ 0x5eed));
            let start = sys.random_state(seed);
            let r = ladder_radius(2 + (t % 5) as u32);
            let tau = hitting_time(sys, &start, &x0, &r, n_max)?.tau;
            let mut first = None;
            let mut st = start.clone();
            for n in 1..=n_max {
                sys.advance(&mut st)?;
                if distance(&sys.point(&st), &x0) < r {
                    first = Some(n);
                    break;
                }
            }
            let longer = hitting_time(sys, &start, &x0, &r, 4 * n_max)?.tau;
            let ok = match tau {
                Tau::Hit(n) => first == Some(n) && longer == tau,
                Tau::Censored(c) => {
                    c == n_max && first.is_none() && longer.value().is_none_or(|v| v > n_max)
                }
            };
            check.record(ok, || format!("{sys} seed {seed}: {tau:?}, brute {first:?}, longer {longer:?}"));
        }
    }
    Ok(check)
}

/// `c(aφ, ψ) = a·c(φ, ψ)` and `c(φ, aψ) = a·c(φ, ψ)` bit for bit, for power-of-two `a`.
pub fn correlation_linearity(cfg: &VerifyConfig) -> Result<Check> {
    let mut check = Check::new("correlation estimator linearity");
    let lags: Vec<u64> = (1..=12).collect();
    for spec in ["doubling", "cat"] {
        let sys: SystemSpec<f64> = spec.parse()?;
        let sample = sample_measure(&sys, 4_000, SampleMethod::IidLebesgue { seed: cfg.seed })?;
        let centre = match sys.space() {
            Space::Circle => Point::circle(0.5),
            Space::Torus2 => Point::torus(0.5, 0.25),
        };
        let phi = Observable::bump(centre.clone(), 0.1, 0.2)?;
        let psi = Observable::bump(centre, 0.05, 0.3)?;
        let base = correlation_series(&sys, &phi, &psi, &lags, &sample)?;
        for a in [2.0, 0.25, -1.0, 8.0, -0.5] {
            for (side, s) in [
                ("φ", correlation_series(&sys, &phi.scaled(a), &psi, &lags, &sample)?),
                ("ψ", correlation_series(&sys, &phi, &psi.scaled(a), &lags, &sample)?),
            ] {
                for (e, b) in s.entries.iter().zip(&base.entries) {
                    let ok = e.c_hat == a * b.c_hat && e.se == a.abs() * b.se;
                    check.record(ok, || format!("{spec}, {side} scaled by {a}, lag {}: {} vs {}", e.n, e.c_hat, a * b.c_hat));
                }
            }
        }
    }
    Ok(check)
}

/// `|φ(x) − φ(y)| ≤ Lip(φ)·d(x, y)` on random pairs. Every input is a multiple of
/// `2^{-30}` and `r_out − r_in` is a power of two, so both sides are exact.
pub fn bump_lipschitz(cfg: &VerifyConfig) -> Result<Check> {
    let mut check = Check::new("bump Lipschitz bound");
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0x11b));
    let grid = |rng: &mut rand_chacha::ChaCha8Rng| rng.random_range(0u64..1 << 30) as f64 / (1u64 << 30) as f64;
    for i in 0..cfg.lipschitz_pairs {
        let torus = i % 2 == 1;
        let r_in = rng.random_range(1u64..1 << 20) as f64 / (1u64 << 23) as f64;
        let width = 0.5f64.powi(rng.random_range(3..12));
        let r_out = r_in + width;
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            if torus {
                Point::torus(grid(rng), grid(rng))
            } else {
                Point::circle(grid(rng))
            }
        };
        let x0 = mk(&mut rng);
        let phi = Observable::bump(x0.clone(), r_in, r_out)?;
        // Half the pairs straddle the ramp so the linear part is exercised.
        let x = if i % 4 < 2 { mk(&mut rng) } else { near(&x0, r_in, r_out, &mut rng, torus) };
        let y = if i % 4 < 2 { mk(&mut rng) } else { near(&x0, r_in, r_out, &mut rng, torus) };
        let lhs = (phi.eval(&x) - phi.eval(&y)).abs();
        let rhs = phi.lipschitz_constant() * distance(&x, &y);
        let bounded = (0.0..=1.0).contains(&phi.eval(&x));
        check.record(lhs <= rhs && bounded, || format!("bump at {x0} radii ({r_in}, {r_out}): |Δφ| = {lhs} > {rhs} for {x}, {y}"));
    }
    Ok(check)
}

fn near(x0: &Point<f64>, r_in: f64, r_out: f64, rng: &mut rand_chacha::ChaCha8Rng, torus: bool) -> Point<f64> {
    let span = ((r_out + (r_out - r_in)) * (1u64 << 30) as f64) as i64;
    let mut off = || rng.random_range(-span..=span) as f64 / (1u64 << 30) as f64;
    let c = x0.coords();
    let wrap = |v: f64| v.rem_euclid(1.0);
    if torus {
        Point::torus(wrap(c[0] + off()), wrap(c[1] + off()))
    } else {
        Point::circle(wrap(c[0] + off()))
    }
}

/// `μ(T^{-m} I ∩ J) = μ(I)μ(J)` exactly for every dyadic `I` of rank ≤ 10 and
/// every `J` with rank ≤ min(m, 10), shifts `m ≤ 12`.
pub fn oracle_independence() -> Result<Check> {
    let mut check = Check::new("oracle independence identity");
    for m in 0..=12u32 {
        for ri in 0..=10u32 {
            for rj in 0..=m.min(10) {
                let mut bad = None;
                let mut cases = 0u64;
                for i in DyadicInterval::all_of_rank(ri) {
                    for j in DyadicInterval::all_of_rank(rj) {
                        let (count, den) = preimage_intersection_units(&i, &j, m)?;
                        cases += 1;
                        // count·2^{-den} = 2^{-ri}·2^{-rj}
                        if den < ri + rj || count != 1u64 << (den - ri - rj) {
                            bad.get_or_insert((i, j));
                        }
                    }
                }
                check.cases += cases - 1;
                check.record(bad.is_none(), || format!("m {m}: {bad:?}"));
            }
        }
    }
    Ok(check)
}

/// The run-length automaton's mean hitting time equals `2^m − m`.
pub fn oracle_mean_hitting_time() -> Check {
    let mut check = Check::new("oracle mean hitting time");
    for m in 1..=30u32 {
        let v = expected_bitstream_hitting_time(m);
        let want = num_rational::BigRational::from_integer(((1u64 << m) - m as u64).into());
        check.record(v == want, || format!("m {m}: {v}"));
    }
    check
}

/// Fixed-point doubling and the exact tape rule agree on every hitting time.
pub fn backend_crosscheck(cfg: &VerifyConfig) -> Result<Check> {
    let mut check = Check::new("fixed-point vs bitstream hitting times");
    let budget = (cfg.crosscheck_n_max + 64) as u32 + GUARD_BITS;
    for s in 0..cfg.crosscheck_seeds {
        for m in 2..=10 {
            let seed = derive_seed(cfg.seed, s);
            let r = crosscheck_backends(seed, m, cfg.crosscheck_n_max, budget);
            check.record(r.is_ok(), || format!("seed {seed}, m {m}: {r:?}"));
        }
    }
    Ok(check)
}

/// Every exact check, in a fixed order.
pub fn run_all(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    Ok(vec![
        shift_identity(cfg)?,
        nesting_monotonicity(cfg)?,
        censoring_consistency(cfg)?,
        correlation_linearity(cfg)?,
        bump_lipschitz(cfg)?,
        oracle_independence()?,
        oracle_mean_hitting_time(),
        backend_crosscheck(cfg)?,
    ])
}

/// One Monte Carlo estimate of `μ(T^{-m} I ∩ J)` against the oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicComparison {
    pub i: DyadicInterval,
    pub j: DyadicInterval,
    pub m: u32,
    pub exact: f64,
    pub estimate: f64,
    /// Binomial standard error at the exact probability.
    pub se: f64,
}

impl DyadicComparison {
    /// `|estimate − exact| ≤ k·se`.
    pub fn within(&self, k: f64) -> bool {
        (self.estimate - self.exact).abs() <= k * self.se
    }
}

/// Histogram resolution of the Monte Carlo comparison.
pub const MC_RANK: u32 = 10;
pub const MC_MAX_SHIFT: u32 = 12;

/// Compare Monte Carlo intersections on the doubling map with the oracle.
///
/// `M` Lebesgue-random points are iterated by the doubling system; for every shift
/// `m ≤ 12` a `2^10 × 2^10` histogram of (rank-10 cell of `x`, rank-10 cell of
/// `T^m x`) gives every dyadic count in O(1). One pair `(I, J)` with seeded
/// indices is compared per `(rank I, rank J, m)`.
pub fn dyadic_monte_carlo(sys: &SystemSpec<f64>, m_samples: usize, seed: u64) -> Result<Vec<DyadicComparison>> {
    if !matches!(sys.family(), Family::Doubling) {
        return Err(crate::error::Error::InvalidSystem("dyadic Monte Carlo needs the doubling map".into()));
    }
    let side = 1usize << MC_RANK;
    let shifts = MC_MAX_SHIFT as usize + 1;
    let cell = |x: f64| ((x * side as f64) as usize).min(side - 1);
    // codes[m][i]: cell of T^m x_i.
    let mut codes = vec![vec![0u16; m_samples]; shifts];
    let sample = sample_measure(sys, m_samples, SampleMethod::IidLebesgue { seed })?;
    for i in 0..m_samples {
        let mut st = sample.state(i)?;
        for row in codes.iter_mut() {
            row[i] = cell(*sys.point(&st).x()) as u16;
            sys.advance(&mut st)?;
        }
    }
    let mut rng = rng_from_seed(derive_seed(seed, 0xd7ad));
    let mut out = Vec::new();
    let mf = m_samples as f64;
    for m in 0..=MC_MAX_SHIFT {
        // prefix[(a)(side+1) + b] = #{x: cell(x) < a, cell(T^m x) < b}
        let w = side + 1;
        let mut prefix = vec![0u32; w * w];
        for (&a, &b) in codes[0].iter().zip(&codes[m as usize]) {
            prefix[(a as usize + 1) * w + b as usize + 1] += 1;
        }
        for a in 1..w {
            for b in 1..w {
                prefix[a * w + b] += prefix[(a - 1) * w + b] + prefix[a * w + b - 1] - prefix[(a - 1) * w + b - 1];
            }
        }
        let rect = |a0: usize, a1: usize, b0: usize, b1: usize| -> u32 {
            prefix[a1 * w + b1] + prefix[a0 * w + b0] - prefix[a0 * w + b1] - prefix[a1 * w + b0]
        };
        for ri in 0..=MC_RANK {
            for rj in 0..=MC_RANK {
                let i = DyadicInterval::new(ri, rng.random_range(0..1u64 << ri))?;
                let j = DyadicInterval::new(rj, rng.random_range(0..1u64 << rj))?;
                let (sj, si) = (1usize << (MC_RANK - rj), 1usize << (MC_RANK - ri));
                let (a0, b0) = (j.index() as usize * sj, i.index() as usize * si);
                let count = rect(a0, a0 + sj, b0, b0 + si);
                let (units, den) = preimage_intersection_units(&i, &j, m)?;
                let exact = units as f64 * 0.5f64.powi(den as i32);
                out.push(DyadicComparison {
                    i,
                    j,
                    m,
                    exact,
                    estimate: count as f64 / mf,
                    se: (exact * (1.0 - exact) / mf).sqrt(),
                });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> VerifyConfig {
        VerifyConfig {
            trials: 20,
            lipschitz_pairs: 2_000,
            crosscheck_seeds: 3,
            crosscheck_n_max: 2_000,
            ..Default::default()
        }
    }

    #[test]
    fn quick_checks_pass() {
        let cfg = small();
        for c in [
            shift_identity(&cfg).unwrap(),
            nesting_monotonicity(&cfg).unwrap(),
            censoring_consistency(&cfg).unwrap(),
            correlation_linearity(&cfg).unwrap(),
            bump_lipschitz(&cfg).unwrap(),
            oracle_mean_hitting_time(),
            backend_crosscheck(&cfg).unwrap(),
        ] {
            assert!(c.passed(), "{c}");
        }
    }

    #[test]
    fn failures_are_reported() {
        let mut c = Check::new("x");
        c.record(true, || unreachable!());
        c.record(false, || "first".into());
        c.record(false, || "second".into());
        assert!(!c.passed());
        assert_eq!(c.first_failure.as_deref(), Some("first"));
        assert!(c.to_string().starts_with("FAIL x: 3 cases, 2 failures"));
        assert!(!Check::new("empty").passed());
    }

    #[test]
    fn monte_carlo_shape() {
        let sys = SystemSpec::<f64>::doubling();
        let r = dyadic_monte_carlo(&sys, 20_000, 3).unwrap();
        assert_eq!(r.len(), 11 * 11 * 13);
        for c in &r {
            if c.i.rank() == 0 && c.j.rank() == 0 {
                assert_eq!(c.estimate, 1.0);
            }
            if c.exact == 0.0 {
                assert_eq!(c.estimate, 0.0);
            }
        }
        let far = r.iter().filter(|c| !c.within(5.0)).count();
        assert!(far <= 2, "{far} comparisons beyond 5 se");
    }
}
