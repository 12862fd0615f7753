//! The map families, their phase spaces and the orbit backends.
//!
//! Every system lives on the circle `[0,1)` or the 2-torus `[0,1)^2`. Orbits are
//! advanced through an [`OrbitState`] whose representation depends on the
//! backend:
//!
//! * `Float` iterates the map in the scalar type's own arithmetic.
//! * `Fixed` holds a finite binary fraction of `bit_budget` bits and reports
//!   [`Error::PrecisionExhausted`] once the expansion has eaten into its guard bits.
//! * `Bitstream` (doubling only) reads the orbit straight off a [`BitTape`]:
//!   `T^n(x)` is the tape shifted by `n`, exact forever.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::rng::BitTape;
use crate::scalar::Scalar;

/// Bits of slack kept in reserve before a finite-precision orbit is declared exhausted.
pub const GUARD_BITS: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    Circle,
    Torus2,
}

impl Space {
    pub fn dim(self) -> usize {
        match self {
            Space::Circle => 1,
            Space::Torus2 => 2,
        }
    }
}

/// A point of the circle or the torus, coordinates reduced into `[0,1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Point<T> {
    coords: [T; 2],
    space: Space,
}

impl<T: Scalar> Point<T> {
    pub fn circle(x: T) -> Self {
        Self {
            coords: [x.wrap_unit(), T::zero()],
            space: Space::Circle,
        }
    }

    pub fn torus(x: T, y: T) -> Self {
        Self {
            coords: [x.wrap_unit(), y.wrap_unit()],
            space: Space::Torus2,
        }
    }

    pub fn new(space: Space, coords: &[T]) -> Result<Self> {
        match (space, coords) {
            (Space::Circle, [x]) => Ok(Self::circle(x.clone())),
            (Space::Torus2, [x, y]) => Ok(Self::torus(x.clone(), y.clone())),
            _ => Err(Error::InvalidPoint(format!(
                "{space:?} expects {} coordinate(s), got {}",
                space.dim(),
                coords.len()
            ))),
        }
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn coords(&self) -> &[T] {
        &self.coords[..self.space.dim()]
    }

    pub fn x(&self) -> &T {
        &self.coords[0]
    }

    pub fn to_f64(&self) -> Point<f64> {
        Point {
            coords: [self.coords[0].to_f64_lossy(), self.coords[1].to_f64_lossy()],
            space: self.space,
        }
    }
}

impl<T: Scalar> fmt::Display for Point<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords().iter().map(|c| format!("{}", c.to_f64_lossy())).collect();
        write!(f, "{}", parts.join(" "))
    }
}

/// Distance on the unit circle.
pub fn circle_distance<T: Scalar>(a: &T, b: &T) -> T {
    let d = (a.clone() - b.clone()).abs();
    T::min_of(d.clone(), T::one() - d)
}

/// Circle metric, or the sup of per-coordinate circle distances on the torus.
pub fn distance<T: Scalar>(a: &Point<T>, b: &Point<T>) -> T {
    debug_assert_eq!(a.space, b.space, "points from different spaces");
    match a.space {
        Space::Circle => circle_distance(&a.coords[0], &b.coords[0]),
        Space::Torus2 => T::max_of(
            circle_distance(&a.coords[0], &b.coords[0]),
            circle_distance(&a.coords[1], &b.coords[1]),
        ),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family<T> {
    Doubling,
    Tent,
    Cat,
    Rotation { alpha: T },
    MannevillePomeau { s: T },
}

impl<T: Scalar> Family<T> {
    pub fn space(&self) -> Space {
        match self {
            Family::Cat => Space::Torus2,
            _ => Space::Circle,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::Doubling => "doubling",
            Family::Tent => "tent",
            Family::Cat => "cat",
            Family::Rotation { .. } => "rotation",
            Family::MannevillePomeau { .. } => "mp",
        }
    }

    /// Global Lipschitz constant of the map for the metric of its space.
    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            Family::Doubling | Family::Tent => 2.0,
            // Max row sum of [[2, 1], [1, 1]]: the operator norm for the sup metric.
            Family::Cat => 3.0,
            Family::Rotation { .. } => 1.0,
            Family::MannevillePomeau { s } => 2.0 + s.to_f64_lossy(),
        }
    }

    /// Bits of significance lost per step by an exact finite-precision orbit.
    fn bits_lost_per_step(&self) -> f64 {
        match self {
            Family::Doubling | Family::Tent => 1.0,
            Family::Cat => ((3.0 + 5f64.sqrt()) / 2.0).log2(),
            Family::Rotation { .. } => 0.0,
            Family::MannevillePomeau { .. } => f64::NAN,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    /// Native arithmetic of the scalar type (`float64` in the system grammar).
    Float,
    Fixed { bit_budget: u32 },
    Bitstream,
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Backend::Float => write!(f, "float64"),
            Backend::Fixed { bit_budget } => write!(f, "fixed:{bit_budget}"),
            Backend::Bitstream => write!(f, "bitstream"),
        }
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "float64" | "float" => Ok(Backend::Float),
            "bitstream" => Ok(Backend::Bitstream),
            other => {
                let budget = other
                    .strip_prefix("fixed:")
                    .and_then(|b| b.parse::<u32>().ok())
                    .ok_or_else(|| Error::InvalidSystem(format!("unknown backend `{other}`")))?;
                if budget <= GUARD_BITS {
                    return Err(Error::InvalidSystem(format!(
                        "fixed-point budget must exceed {GUARD_BITS} bits"
                    )));
                }
                Ok(Backend::Fixed { bit_budget: budget })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeasureKind {
    LebesgueExact,
    OrbitEmpirical,
}

/// A dynamical system `(X, T, μ)` together with the backend used to iterate it.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemSpec<T> {
    family: Family<T>,
    backend: Backend,
    measure: MeasureKind,
    allow_rational: bool,
}

impl<T: Scalar> SystemSpec<T> {
    /// Validated system with the family's natural reference measure.
    pub fn new(family: Family<T>, backend: Backend) -> Result<Self> {
        let measure = match family {
            Family::MannevillePomeau { .. } => MeasureKind::OrbitEmpirical,
            _ => MeasureKind::LebesgueExact,
        };
        let spec = Self {
            family,
            backend,
            measure,
            allow_rational: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn doubling() -> Self {
        Self::new(Family::Doubling, Backend::Bitstream).expect("valid")
    }

    pub fn cat() -> Self {
        Self::new(Family::Cat, Backend::Float).expect("valid")
    }

    pub fn rotation(alpha: T) -> Result<Self> {
        Self::new(Family::Rotation { alpha }, Backend::Float)
    }

    pub fn manneville_pomeau(s: T) -> Result<Self> {
        Self::new(Family::MannevillePomeau { s }, Backend::Float)
    }

    pub fn with_measure(mut self, measure: MeasureKind) -> Result<Self> {
        self.measure = measure;
        self.validate()?;
        Ok(self)
    }

    pub fn with_backend(mut self, backend: Backend) -> Result<Self> {
        self.backend = backend;
        self.validate()?;
        Ok(self)
    }

    /// Permit rational rotation angles in experiments.
    pub fn allowing_rational_angle(mut self) -> Self {
        self.allow_rational = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSystem(m.to_string()));
        match &self.family {
            Family::MannevillePomeau { s } => {
                if !(*s > T::zero() && *s < T::one()) {
                    return bad("manneville_pomeau requires s in (0,1)");
                }
                if s.powf(s).is_none() {
                    return bad("manneville_pomeau needs a scalar type with powf");
                }
                if self.measure == MeasureKind::LebesgueExact {
                    return bad("manneville_pomeau has no exact reference measure");
                }
                if matches!(self.backend, Backend::Fixed { .. }) {
                    return bad("manneville_pomeau has no fixed-point backend");
                }
            }
            Family::Rotation { alpha } => {
                if !(*alpha > T::zero() && *alpha < T::one()) {
                    return bad("rotation angle must lie in (0,1)");
                }
            }
            _ => {}
        }
        if self.backend == Backend::Bitstream && self.family != Family::Doubling {
            return bad("bitstream backend is only valid for the doubling map");
        }
        Ok(())
    }

    pub fn family(&self) -> &Family<T> {
        &self.family
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn measure(&self) -> MeasureKind {
        self.measure
    }

    pub fn space(&self) -> Space {
        self.family.space()
    }

    pub fn allows_rational_angle(&self) -> bool {
        self.allow_rational
    }

    /// Rational rotations are not ergodic.
    pub fn is_non_ergodic(&self) -> bool {
        match &self.family {
            Family::Rotation { alpha } => rational_approximation(alpha.to_f64_lossy(), 10_000, 1e-12).is_some(),
            _ => false,
        }
    }

    /// Refuse non-ergodic configurations unless explicitly allowed.
    pub fn check_ergodic(&self) -> Result<()> {
        if self.is_non_ergodic() && !self.allow_rational {
            return Err(Error::InvalidSystem(
                "rational rotation angle is non-ergodic; set allow_rational=true to override".into(),
            ));
        }
        Ok(())
    }

    /// Apply the map once in the scalar's own arithmetic.
    pub fn step(&self, x: &Point<T>) -> Point<T> {
        let two = T::one() + T::one();
        match &self.family {
            Family::Doubling => Point::circle(two * x.coords[0].clone()),
            Family::Tent => {
                let v = x.coords[0].clone();
                Point::circle(T::one() - (T::one() - two * v).abs())
            }
            Family::Rotation { alpha } => Point::circle(x.coords[0].clone() + alpha.clone()),
            Family::Cat => {
                let (a, b) = (x.coords[0].clone(), x.coords[1].clone());
                Point::torus(two * a.clone() + b.clone(), a + b)
            }
            Family::MannevillePomeau { s } => {
                let v = x.coords[0].clone();
                let e = T::one() + s.clone();
                let p = v.powf(&e).expect("validated: scalar supports powf");
                Point::circle(v + p)
            }
        }
    }

    fn float_step_budget(&self) -> Option<u64> {
        match self.family {
            Family::Doubling | Family::Tent => {
                T::PRECISION_BITS.map(|p| p.saturating_sub(GUARD_BITS) as u64)
            }
            _ => None,
        }
    }

    /// Bits kept when turning a bit expansion into a scalar value.
    fn readout_bits() -> u32 {
        T::PRECISION_BITS.unwrap_or(64).min(64)
    }

    /// Initial state at an explicit point.
    pub fn start(&self, x: &Point<T>) -> Result<OrbitState<T>> {
        if x.space != self.space() {
            return Err(Error::InvalidPoint(format!(
                "point lives on {:?}, system on {:?}",
                x.space,
                self.space()
            )));
        }
        let inner = match self.backend {
            Backend::Float => StateInner::Float(x.clone()),
            Backend::Fixed { bit_budget } => {
                let expansions: Vec<Vec<bool>> = x
                    .coords()
                    .iter()
                    .map(|c| binary_expansion(c, bit_budget as usize))
                    .collect();
                self.fixed_from_bits(bit_budget, &expansions)
            }
            Backend::Bitstream => {
                return Err(Error::InvalidArgument(
                    "bitstream orbits start from a BitTape, not a point".into(),
                ))
            }
        };
        Ok(OrbitState { inner, steps: 0 })
    }

    /// Initial state whose binary expansion is read from `tape`. On the torus the
    /// second coordinate uses the bits following the first coordinate's.
    pub fn start_tape(&self, mut tape: BitTape) -> Result<OrbitState<T>> {
        let dim = self.space().dim();
        let inner = match self.backend {
            Backend::Bitstream => {
                tape.ensure(128);
                StateInner::Bits(BitCursor { tape, offset: 0 })
            }
            Backend::Fixed { bit_budget } if matches!(self.family, Family::Doubling | Family::Tent) => {
                StateInner::Shift(ShiftState {
                    words: Arc::new(tape.prefix_words(bit_budget as u64)),
                    budget: bit_budget,
                    offset: 0,
                    flip: false,
                })
            }
            Backend::Fixed { bit_budget } => {
                let b = bit_budget as u64;
                let expansions: Vec<Vec<bool>> = (0..dim as u64)
                    .map(|c| (0..b).map(|i| tape.bit(c * b + i)).collect())
                    .collect();
                self.fixed_from_bits(bit_budget, &expansions)
            }
            Backend::Float => {
                let d = Self::readout_bits();
                let coords: Vec<T> = (0..dim as u64)
                    .map(|c| T::from_dyadic(tape.window(c * d as u64, d), d))
                    .collect();
                StateInner::Float(Point::new(self.space(), &coords)?)
            }
        };
        Ok(OrbitState { inner, steps: 0 })
    }

    /// Lebesgue-random initial state keyed by `seed`.
    pub fn random_state(&self, seed: u64) -> OrbitState<T> {
        self.start_tape(BitTape::seeded(seed)).expect("tape starts are valid for every backend")
    }

    fn fixed_from_bits(&self, bit_budget: u32, expansions: &[Vec<bool>]) -> StateInner<T> {
        match &self.family {
            Family::Doubling | Family::Tent => StateInner::Shift(ShiftState {
                words: Arc::new(pack_bits(&expansions[0])),
                budget: bit_budget,
                offset: 0,
                flip: false,
            }),
            Family::Cat | Family::Rotation { .. } => {
                let mut coords = [BigUint::zero(), BigUint::zero()];
                for (c, bits) in coords.iter_mut().zip(expansions) {
                    *c = biguint_from_bits(bits);
                }
                let increment = match &self.family {
                    Family::Rotation { alpha } => {
                        Some(biguint_from_bits(&binary_expansion(alpha, bit_budget as usize)))
                    }
                    _ => None,
                };
                StateInner::Lattice(LatticeState {
                    coords,
                    budget: bit_budget,
                    increment,
                    lost_bits: 0.0,
                })
            }
            Family::MannevillePomeau { .. } => unreachable!("validated: no fixed backend for mp"),
        }
    }

    /// Apply one step to `state`.
    pub fn advance(&self, state: &mut OrbitState<T>) -> Result<()> {
        let next = state.steps + 1;
        match &mut state.inner {
            StateInner::Float(p) => {
                if let Some(budget) = self.float_step_budget() {
                    if next > budget {
                        return Err(Error::PrecisionExhausted { step: next });
                    }
                }
                *p = self.step(p);
            }
            StateInner::Shift(s) => {
                if next > (s.budget - GUARD_BITS) as u64 {
                    return Err(Error::PrecisionExhausted { step: next });
                }
                let lead = s.stored_bit(s.offset) ^ s.flip;
                s.offset += 1;
                if matches!(self.family, Family::Tent) && lead {
                    s.flip = !s.flip;
                }
            }
            StateInner::Lattice(l) => {
                let lost = match self.family {
                    Family::Rotation { .. } => (next as f64 + 1.0).log2(),
                    _ => l.lost_bits + self.family.bits_lost_per_step(),
                };
                if lost > (l.budget - GUARD_BITS) as f64 {
                    return Err(Error::PrecisionExhausted { step: next });
                }
                l.lost_bits = lost;
                let mask = (BigUint::one() << l.budget as usize) - BigUint::one();
                match &l.increment {
                    Some(inc) => l.coords[0] = (&l.coords[0] + inc) & &mask,
                    None => {
                        let [x, y] = &l.coords;
                        let nx = ((x << 1usize) + y) & &mask;
                        let ny = (x + y) & &mask;
                        l.coords = [nx, ny];
                    }
                }
            }
            StateInner::Bits(c) => {
                c.offset += 1;
                c.tape.ensure(c.offset + 128);
            }
        }
        state.steps = next;
        Ok(())
    }

    /// Apply `k` steps. Constant time for the bitstream backend.
    pub fn advance_by(&self, state: &mut OrbitState<T>, k: u64) -> Result<()> {
        if let StateInner::Bits(c) = &mut state.inner {
            c.offset += k;
            c.tape.ensure(c.offset + 128);
            state.steps += k;
            return Ok(());
        }
        for _ in 0..k {
            self.advance(state)?;
        }
        Ok(())
    }

    /// The point currently represented by `state`.
    pub fn point(&self, state: &OrbitState<T>) -> Point<T> {
        let d = Self::readout_bits();
        match &state.inner {
            StateInner::Float(p) => p.clone(),
            StateInner::Shift(s) => {
                let v = match T::PRECISION_BITS {
                    Some(_) => T::from_dyadic(s.window(d), d),
                    None => {
                        let rest = (s.budget as u64).saturating_sub(s.offset);
                        let bits: Vec<bool> = (0..rest).map(|j| s.stored_bit(s.offset + j)).collect();
                        dyadic_from_biguint(&biguint_from_bits(&bits), rest as u32)
                    }
                };
                Point::circle(if s.flip { (T::one() - v).wrap_unit() } else { v })
            }
            StateInner::Lattice(l) => {
                let read = |c: &BigUint| -> T {
                    if T::PRECISION_BITS.is_none() {
                        return dyadic_from_biguint(c, l.budget);
                    }
                    let v = if l.budget >= d {
                        c >> (l.budget - d) as usize
                    } else {
                        c << (d - l.budget) as usize
                    };
                    T::from_dyadic(v.to_u64().expect("fits in readout width"), d)
                };
                match self.space() {
                    Space::Circle => Point::circle(read(&l.coords[0])),
                    Space::Torus2 => Point::torus(read(&l.coords[0]), read(&l.coords[1])),
                }
            }
            StateInner::Bits(c) => Point::circle(T::from_dyadic(c.tape.window_cached(c.offset, d), d)),
        }
    }

    /// Stream `T^1(x), ..., T^n(x)` starting from `state`.
    pub fn orbit(&self, state: OrbitState<T>, n: u64) -> Orbit<'_, T> {
        Orbit {
            sys: self,
            state,
            remaining: n,
            failed: false,
        }
    }
}

impl<T: Scalar> fmt::Display for SystemSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut params = Vec::new();
        match &self.family {
            Family::Rotation { alpha } => params.push(format!("alpha={:?}", alpha.to_f64_lossy())),
            Family::MannevillePomeau { s } => params.push(format!("s={:?}", s.to_f64_lossy())),
            _ => {}
        }
        params.push(format!("backend={}", self.backend));
        if self.allow_rational {
            params.push("allow_rational=true".into());
        }
        write!(f, "{}:{}", self.family.name(), params.join(","))
    }
}

impl<T: Scalar> FromStr for SystemSpec<T> {
    type Err = Error;

    /// `family[:key=value,...]`, e.g. `rotation:alpha=golden`, `mp:s=0.5`,
    /// `doubling:backend=fixed:4096`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut alpha = None;
        let mut exponent = None;
        let mut backend = None;
        let mut measure = None;
        let mut allow_rational = false;
        for kv in rest.split(',').map(str::trim).filter(|kv| !kv.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidSystem(format!("expected key=value, got `{kv}`")))?;
            match k.trim() {
                "alpha" => alpha = Some(parse_angle(v.trim())?),
                "s" => exponent = Some(parse_real(v.trim())?),
                "backend" => backend = Some(v.parse::<Backend>()?),
                "measure" => {
                    measure = Some(match v.trim() {
                        "exact" | "lebesgue_exact" => MeasureKind::LebesgueExact,
                        "empirical" | "orbit_empirical" => MeasureKind::OrbitEmpirical,
                        other => return Err(Error::InvalidSystem(format!("unknown measure `{other}`"))),
                    })
                }
                "allow_rational" => allow_rational = v.trim() == "true",
                other => return Err(Error::InvalidSystem(format!("unknown system parameter `{other}`"))),
            }
        }
        let family = match name.trim() {
            "doubling" => Family::Doubling,
            "tent" => Family::Tent,
            "cat" => Family::Cat,
            "rotation" => Family::Rotation {
                alpha: T::from_f64(alpha.ok_or_else(|| Error::InvalidSystem("rotation needs alpha".into()))?),
            },
            "mp" | "manneville_pomeau" => Family::MannevillePomeau {
                s: T::from_f64(exponent.ok_or_else(|| Error::InvalidSystem("mp needs s".into()))?),
            },
            other => return Err(Error::InvalidSystem(format!("unknown system `{other}`"))),
        };
        let backend = backend.unwrap_or(match family {
            Family::Doubling => Backend::Bitstream,
            Family::Tent => Backend::Fixed { bit_budget: 1 << 20 },
            _ => Backend::Float,
        });
        let mut spec = Self::new(family, backend)?;
        if let Some(m) = measure {
            spec = spec.with_measure(m)?;
        }
        spec.allow_rational = allow_rational;
        Ok(spec)
    }
}

fn parse_real(v: &str) -> Result<f64> {
    if let Some((p, q)) = v.split_once('/') {
        let p: f64 = p.trim().parse().map_err(|_| Error::InvalidSystem(format!("bad number `{v}`")))?;
        let q: f64 = q.trim().parse().map_err(|_| Error::InvalidSystem(format!("bad number `{v}`")))?;
        return Ok(p / q);
    }
    v.parse().map_err(|_| Error::InvalidSystem(format!("bad number `{v}`")))
}

/// Accepts decimals, fractions `p/q`, `golden`, and `liouvilleN`.
fn parse_angle(v: &str) -> Result<f64> {
    if v == "golden" {
        return Ok(golden_angle());
    }
    if let Some(n) = v.strip_prefix("liouville") {
        let terms = if n.is_empty() { 6 } else { n.parse().map_err(|_| Error::InvalidSystem(format!("bad angle `{v}`")))? };
        return Ok(liouville_angle(terms));
    }
    parse_real(v)
}

/// `(√5 − 1)/2`.
pub fn golden_angle() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// Truncated Liouville constant `Σ_{n ≤ terms} 2^{-n!}` rounded to `f64`.
pub fn liouville_angle(terms: u32) -> f64 {
    let mut sum = 0.0;
    let mut fact: u64 = 1;
    for n in 1..=terms as u64 {
        fact = fact.saturating_mul(n);
        if fact > 1100 {
            break;
        }
        sum += 2f64.powi(-(fact as i32));
    }
    sum
}

/// Best rational `p/q` with `q ≤ max_den` within `tol` of `x`, by continued fractions.
pub fn rational_approximation(x: f64, max_den: u64, tol: f64) -> Option<(u64, u64)> {
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut v = x;
    for _ in 0..64 {
        let a = v.floor();
        if a > 1e12 {
            break;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > max_den {
            break;
        }
        if (x - h2 as f64 / k2 as f64).abs() <= tol {
            return Some((h2, k2));
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = v - a as f64;
        if frac == 0.0 {
            break;
        }
        v = 1.0 / frac;
    }
    None
}

/// First `n` binary digits of `x ∈ [0,1)`, computed by repeated doubling in `T`.
pub fn binary_expansion<T: Scalar>(x: &T, n: usize) -> Vec<bool> {
    let two = T::one() + T::one();
    let mut v = x.wrap_unit();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        v = two.clone() * v;
        let bit = v >= T::one();
        if bit {
            v = v - T::one();
        }
        out.push(bit);
        if v.is_zero() {
            out.resize(n, false);
            break;
        }
    }
    out
}

fn pack_bits(bits: &[bool]) -> Vec<u64> {
    bits.chunks(64)
        .map(|chunk| {
            let mut w = 0u64;
            for (j, &b) in chunk.iter().enumerate() {
                w |= (b as u64) << (63 - j);
            }
            w
        })
        .collect()
}

/// `v / 2^bits` built exactly from 64-bit limbs.
fn dyadic_from_biguint<T: Scalar>(v: &BigUint, bits: u32) -> T {
    let mut acc = T::zero();
    for (i, limb) in v.to_u64_digits().iter().enumerate() {
        let shift = bits as i64 - 64 * i as i64;
        acc = acc + if shift >= 0 {
            T::from_dyadic(*limb, shift as u32)
        } else {
            T::from_dyadic(*limb, 0) * T::from_usize(1usize << (-shift) as u32)
        };
    }
    acc
}

fn biguint_from_bits(bits: &[bool]) -> BigUint {
    let mut v = BigUint::zero();
    for &b in bits {
        v <<= 1usize;
        if b {
            v += 1u32;
        }
    }
    v
}

/// Where an orbit currently is, in the representation of its backend.
#[derive(Clone, Debug)]
pub struct OrbitState<T> {
    inner: StateInner<T>,
    steps: u64,
}

impl<T> OrbitState<T> {
    /// Number of map applications so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// The tape and offset of a bitstream orbit.
    pub fn bit_cursor(&self) -> Option<(&BitTape, u64)> {
        match &self.inner {
            StateInner::Bits(c) => Some((&c.tape, c.offset)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
enum StateInner<T> {
    Float(Point<T>),
    Shift(ShiftState),
    Lattice(LatticeState),
    Bits(BitCursor),
}

/// Finite binary fraction iterated by shifting (doubling) or shift-and-complement (tent).
#[derive(Clone, Debug)]
struct ShiftState {
    words: Arc<Vec<u64>>,
    budget: u32,
    offset: u64,
    /// Tent: the represented point is `1 - x` of the stored expansion `x`.
    flip: bool,
}

impl ShiftState {
    fn stored_bit(&self, i: u64) -> bool {
        if i >= self.budget as u64 {
            return false;
        }
        (self.words[(i / 64) as usize] >> (63 - i % 64)) & 1 == 1
    }

    /// Leading `len` bits of the uncomplemented expansion.
    fn window(&self, len: u32) -> u64 {
        let mut v = 0u64;
        for j in 0..len as u64 {
            v = (v << 1) | self.stored_bit(self.offset + j) as u64;
        }
        v
    }
}

/// Points of the `2^-budget` lattice, iterated exactly by integer-matrix maps.
#[derive(Clone, Debug)]
struct LatticeState {
    coords: [BigUint; 2],
    budget: u32,
    /// Rotation increment in lattice units; `None` for the cat map.
    increment: Option<BigUint>,
    lost_bits: f64,
}

#[derive(Clone, Debug)]
struct BitCursor {
    tape: BitTape,
    offset: u64,
}

/// Lazy orbit iterator; stops after the first error.
pub struct Orbit<'a, T> {
    sys: &'a SystemSpec<T>,
    state: OrbitState<T>,
    remaining: u64,
    failed: bool,
}

impl<T: Scalar> Orbit<'_, T> {
    pub fn state(&self) -> &OrbitState<T> {
        &self.state
    }
}

impl<T: Scalar> Iterator for Orbit<'_, T> {
    type Item = Result<Point<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 || self.failed {
            return None;
        }
        self.remaining -= 1;
        match self.sys.advance(&mut self.state) {
            Ok(()) => Some(Ok(self.sys.point(&self.state))),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}
