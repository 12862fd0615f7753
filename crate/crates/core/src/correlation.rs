//! Lipschitz bump observables, correlation estimates and decay-law fits.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure;
use crate::scalar::Scalar;
use crate::stats::least_squares;
use crate::systems::{distance, Point, SystemSpec};

/// A real observable on the phase space.
#[derive(Clone, Debug, PartialEq)]
pub enum Observable<T> {
    /// `scale · h(d(x0, x))` with `h` equal to 1 on `[0, r_in]`, linear down to 0
    /// on `[r_in, r_out]` and 0 beyond.
    Bump {
        x0: Point<T>,
        r_in: f64,
        r_out: f64,
        scale: f64,
    },
    Constant(f64),
}

impl<T: Scalar> Observable<T> {
    pub fn bump(x0: Point<T>, r_in: f64, r_out: f64) -> Result<Self> {
        if !(r_in > 0.0 && r_in < r_out && r_out < 0.5) {
            return Err(Error::InvalidObservable(format!(
                "bump radii must satisfy 0 < r_in < r_out < 1/2, got {r_in}, {r_out}"
            )));
        }
        Ok(Observable::Bump {
            x0,
            r_in,
            r_out,
            scale: 1.0,
        })
    }

    pub fn constant(v: f64) -> Self {
        Observable::Constant(v)
    }

    /// The observable multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        match self {
            Observable::Bump { x0, r_in, r_out, scale } => Observable::Bump {
                x0: x0.clone(),
                r_in: *r_in,
                r_out: *r_out,
                scale: scale * a,
            },
            Observable::Constant(v) => Observable::Constant(v * a),
        }
    }

    pub fn eval(&self, x: &Point<T>) -> f64 {
        match self {
            Observable::Constant(v) => *v,
            Observable::Bump { x0, r_in, r_out, scale } => {
                let d = distance(x0, x).to_f64_lossy();
                let h = if d <= *r_in {
                    1.0
                } else if d >= *r_out {
                    0.0
                } else {
                    (r_out - d) / (r_out - r_in)
                };
                scale * h
            }
        }
    }

    /// Lipschitz constant alone.
    pub fn lipschitz_constant(&self) -> f64 {
        match self {
            Observable::Constant(_) => 0.0,
            Observable::Bump { r_in, r_out, scale, .. } => scale.abs() / (r_out - r_in),
        }
    }

    /// `max(sup |φ|, Lip(φ))`.
    pub fn lipschitz_norm(&self) -> f64 {
        match self {
            Observable::Constant(v) => v.abs(),
            Observable::Bump { scale, .. } => scale.abs().max(self.lipschitz_constant()),
        }
    }
}

/// One estimated correlation `∫φ∘T^n ψ dμ − ∫φ dμ ∫ψ dμ` with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrelationEntry {
    pub n: u64,
    pub c_hat: f64,
    pub se: f64,
}

impl CorrelationEntry {
    /// `|c_hat|` above the `3·se` noise floor.
    pub fn is_signal(&self) -> bool {
        self.c_hat.abs() > 3.0 * self.se
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationSeries {
    pub entries: Vec<CorrelationEntry>,
}

/// `1..=50`, then a geometric grid (ratio 1.2) up to `max_lag`.
pub fn default_lags(max_lag: u64) -> Vec<u64> {
    let mut lags: Vec<u64> = (1..=max_lag.min(50)).collect();
    let mut x = 50.0f64;
    loop {
        x *= 1.2;
        let n = x.round() as u64;
        if n > max_lag {
            break;
        }
        lags.push(n);
    }
    if lags.last() != Some(&max_lag) && max_lag > 50 {
        lags.push(max_lag);
    }
    lags
}

const CHUNK: usize = 4096;

/// Per-lag sums over sample points.
#[derive(Clone, Debug)]
struct LagSums {
    a: Vec<f64>,
    ab: Vec<f64>,
    a2b2: Vec<f64>,
    abb: Vec<f64>,
}

impl LagSums {
    fn zeros(n: usize) -> Self {
        Self {
            a: vec![0.0; n],
            ab: vec![0.0; n],
            a2b2: vec![0.0; n],
            abb: vec![0.0; n],
        }
    }

    fn add(&mut self, other: &Self) {
        for (dst, src) in [
            (&mut self.a, &other.a),
            (&mut self.ab, &other.ab),
            (&mut self.a2b2, &other.a2b2),
            (&mut self.abb, &other.abb),
        ] {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

/// Correlations at every lag in `lags` (strictly increasing, all ≥ 1), one orbit
/// segment per sample point. `c_hat = mean(φ(T^n x)·(ψ(x) − mean ψ))`, which is
/// `mean(φ∘T^n·ψ) − mean(φ∘T^n)·mean(ψ)`; `se` is the delta-method error.
pub fn correlation_series<T: Scalar>(
    sys: &SystemSpec<T>,
    phi: &Observable<T>,
    psi: &Observable<T>,
    lags: &[u64],
    sample: &EmpiricalMeasure<T>,
) -> Result<CorrelationSeries> {
    if lags.is_empty() || lags[0] == 0 || lags.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("lags must be strictly increasing and at least 1".into()));
    }
    let m = sample.len();
    let mf = m as f64;
    let b: Vec<f64> = sample.points().iter().map(|p| psi.eval(p)).collect();
    let b_mean = b.iter().sum::<f64>() / mf;
    let b_var = b.iter().map(|v| v * v).sum::<f64>() / mf - b_mean * b_mean;

    let partials: Vec<Result<LagSums>> = (0..m.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut sums = LagSums::zeros(lags.len());
            for i in c * CHUNK..((c + 1) * CHUNK).min(m) {
                let bi = b[i];
                let bt = bi - b_mean;
                let mut state = sample.state(i)?;
                let mut at = 0u64;
                for (j, &n) in lags.iter().enumerate() {
                    sys.advance_by(&mut state, n - at)?;
                    at = n;
                    let a = phi.eval(&sys.point(&state));
                    sums.a[j] += a;
                    sums.ab[j] += a * bt;
                    sums.a2b2[j] += a * a * bt * bt;
                    sums.abb[j] += a * bt * bi;
                }
            }
            Ok(sums)
        })
        .collect();
    let mut total = LagSums::zeros(lags.len());
    for p in partials {
        total.add(&p?);
    }
    let b2_mean = b_var + b_mean * b_mean;
    let entries = lags
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let a_mean = total.a[j] / mf;
            let c_hat = total.ab[j] / mf;
            // Influence of point i: a_i·(b_i − b̄) − ā·b_i.
            let if_mean = c_hat - a_mean * b_mean;
            let if_sq = total.a2b2[j] / mf - 2.0 * a_mean * total.abb[j] / mf + a_mean * a_mean * b2_mean;
            let var = (if_sq - if_mean * if_mean).max(0.0);
            CorrelationEntry {
                n,
                c_hat,
                se: (var / mf).sqrt(),
            }
        })
        .collect();
    Ok(CorrelationSeries { entries })
}

/// Single-lag estimate `(c_hat, se)`.
pub fn correlation_at<T: Scalar>(
    sys: &SystemSpec<T>,
    phi: &Observable<T>,
    psi: &Observable<T>,
    n: u64,
    sample: &EmpiricalMeasure<T>,
) -> Result<(f64, f64)> {
    let s = correlation_series(sys, phi, psi, &[n], sample)?;
    Ok((s.entries[0].c_hat, s.entries[0].se))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DecayClass {
    Exponential { rate: f64 },
    Polynomial { exponent: f64 },
    None,
    Undetermined,
}

impl DecayClass {
    pub fn name(&self) -> &'static str {
        match self {
            DecayClass::Exponential { .. } => "exponential",
            DecayClass::Polynomial { .. } => "polynomial",
            DecayClass::None => "none",
            DecayClass::Undetermined => "undetermined",
        }
    }

    /// Rate or exponent; `NaN` for the parameterless classes.
    pub fn param(&self) -> f64 {
        match *self {
            DecayClass::Exponential { rate } => rate,
            DecayClass::Polynomial { exponent } => exponent,
            _ => f64::NAN,
        }
    }
}

/// Residual sums of squares of the two candidate log-linear fits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitQuality {
    pub exponential_rss: f64,
    pub polynomial_rss: f64,
}

/// A decay law `Φ(n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayModel {
    pub class: DecayClass,
    /// `C` in `Φ(n) = C·e^{−ρn}`, `C·n^{−p}`, or the constant `Φ(n) = C` for `None`.
    pub normalization: f64,
    pub quality: Option<FitQuality>,
    /// Lags that entered the fit.
    pub fitted_lags: Vec<u64>,
}

/// Fewest above-noise lags accepted by [`decay_fit`].
pub const MIN_SIGNAL_LAGS: usize = 4;
/// The winning fit's residual must be at least this factor smaller.
pub const CLASS_MARGIN: f64 = 1.1;
/// Below-noise lags in a row that end the fitted stretch.
const NOISE_RUN: usize = 3;

impl DecayModel {
    pub fn exponential(c: f64, rate: f64) -> Self {
        Self::closed_form(DecayClass::Exponential { rate }, c)
    }

    pub fn polynomial(c: f64, exponent: f64) -> Self {
        Self::closed_form(DecayClass::Polynomial { exponent }, c)
    }

    /// `Φ(n) = c`: no decay at all.
    pub fn constant(c: f64) -> Self {
        Self::closed_form(DecayClass::None, c)
    }

    fn closed_form(class: DecayClass, c: f64) -> Self {
        Self {
            class,
            normalization: c,
            quality: None,
            fitted_lags: Vec::new(),
        }
    }

    /// `Φ(n)`; `NaN` when the class is undetermined.
    pub fn phi(&self, n: f64) -> f64 {
        let c = self.normalization;
        match self.class {
            DecayClass::Exponential { rate } => c * (-rate * n).exp(),
            DecayClass::Polynomial { exponent } => c * n.powf(-exponent),
            DecayClass::None => c,
            DecayClass::Undetermined => f64::NAN,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            normalization: self.normalization * a,
            ..self.clone()
        }
    }

    /// Divide out `‖φ‖·‖ψ‖`, so that `|c(n)| ≤ ‖φ‖‖ψ‖Φ(n)` on the fitted lags.
    pub fn normalized<T: Scalar>(&self, phi: &Observable<T>, psi: &Observable<T>) -> Self {
        self.scaled(1.0 / (phi.lipschitz_norm() * psi.lipschitz_norm()))
    }
}

/// Classify the decay of a correlation series.
///
/// The series has no decay (`None`) when some significant late value (lag in
/// the upper half of the range) is at least half the mean magnitude of the first
/// five lags. Otherwise the fit uses the above-noise entries before the first run
/// of three below-noise lags; `ln |c|` is regressed on `n` and on `ln n`, and the
/// fit with the smaller residual wins if it beats the other by 10%.
pub fn decay_fit(series: &CorrelationSeries) -> Result<DecayModel> {
    let e = &series.entries;
    if e.is_empty() {
        return Err(Error::InsufficientSignal { above_noise: 0, required: MIN_SIGNAL_LAGS });
    }
    let max_lag = e.last().map(|x| x.n).unwrap_or(0);
    let head: Vec<f64> = e.iter().take(5).map(|x| x.c_hat.abs()).collect();
    let head_mean = head.iter().sum::<f64>() / head.len() as f64;
    let late_peak = e
        .iter()
        .filter(|x| x.n > 1 && 2 * x.n > max_lag && x.c_hat.abs() > 3.0 * x.se)
        .map(|x| x.c_hat.abs())
        .fold(0.0, f64::max);
    if head_mean > 0.0 && late_peak >= 0.5 * head_mean {
        let c = e.iter().map(|x| x.c_hat.abs()).fold(0.0, f64::max);
        return Ok(DecayModel {
            class: DecayClass::None,
            normalization: c,
            quality: None,
            fitted_lags: Vec::new(),
        });
    }

    let mut used = Vec::new();
    let mut quiet = 0;
    for x in e {
        if x.is_signal() {
            quiet = 0;
            used.push(*x);
        } else {
            quiet += 1;
            if quiet >= NOISE_RUN {
                break;
            }
        }
    }
    if used.len() < MIN_SIGNAL_LAGS {
        return Err(Error::InsufficientSignal { above_noise: used.len(), required: MIN_SIGNAL_LAGS });
    }
    let ns: Vec<f64> = used.iter().map(|x| x.n as f64).collect();
    let ln_ns: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ln_c: Vec<f64> = used.iter().map(|x| x.c_hat.abs().ln()).collect();
    let exp_fit = least_squares(&ns, &ln_c).ok_or_else(|| Error::InvalidArgument("degenerate lag set".into()))?;
    let pow_fit = least_squares(&ln_ns, &ln_c).ok_or_else(|| Error::InvalidArgument("degenerate lag set".into()))?;
    let quality = FitQuality {
        exponential_rss: exp_fit.rss,
        polynomial_rss: pow_fit.rss,
    };
    let fitted_lags = used.iter().map(|x| x.n).collect();
    let (n_lo, n_hi) = (ns[0], *ns.last().unwrap());

    let exp_ok = exp_fit.slope < 0.0;
    let pow_ok = pow_fit.slope < 0.0;
    let (class, normalization) = if exp_ok && (!pow_ok || exp_fit.rss * CLASS_MARGIN <= pow_fit.rss) {
        (DecayClass::Exponential { rate: -exp_fit.slope }, exp_fit.intercept.exp())
    } else if pow_ok && (!exp_ok || pow_fit.rss * CLASS_MARGIN <= exp_fit.rss) {
        (DecayClass::Polynomial { exponent: -pow_fit.slope }, pow_fit.intercept.exp())
    } else if !exp_ok && !pow_ok {
        (DecayClass::None, used.iter().map(|x| x.c_hat.abs()).fold(0.0, f64::max))
    } else {
        (DecayClass::Undetermined, used[0].c_hat.abs())
    };
    // A trend that loses less than a factor 2 over the fitted range is not decay.
    let drop = match class {
        DecayClass::Exponential { rate } => rate * (n_hi - n_lo),
        DecayClass::Polynomial { exponent } => exponent * (n_hi / n_lo).ln(),
        _ => f64::INFINITY,
    };
    let class = if drop < std::f64::consts::LN_2 { DecayClass::None } else { class };
    Ok(DecayModel {
        class,
        normalization,
        quality: Some(quality),
        fitted_lags,
    })
}
