//! The five experiments. Each one validates its keys up front, runs, and hands
//! back the artifact texts; nothing here touches the filesystem.

use std::fmt::Write as _;

use hittingdim_core::correlation::{correlation_series, decay_fit, default_lags, DecayClass, DecayModel, Observable};
use hittingdim_core::dimension::{local_dimension, MeasureSource};
use hittingdim_core::hitting::{hitting_indicator, recurrence_indicator, IndicatorRun, RadiusLadder, Tau};
use hittingdim_core::measure::{sample_measure, EmpiricalMeasure, SampleMethod};
use hittingdim_core::rng::derive_seed;
use hittingdim_core::sbc::{build_targets, check_corollary, default_checkpoints, sbc_ensemble, VarianceBound};
use hittingdim_core::stats::median;
use hittingdim_core::verify::{self, VerifyConfig};
use hittingdim_core::{Error, MeasureKind, Point, Space, SystemSpec};
use rayon::prelude::*;

use crate::config::{Config, Experiment};
use crate::output::Csv;

/// Why a run did not finish cleanly; each maps to one exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum Failure {
    Config(String),
    Degenerate(String),
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Degenerate(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Degenerate(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::PrecisionExhausted { .. }
            | Error::InsufficientSample { .. }
            | Error::InsufficientSignal { .. }
            | Error::UndeterminedDecay => Failure::Degenerate(msg),
            Error::BackendMismatch { .. } => Failure::Verification(msg),
            _ => Failure::Config(msg),
        }
    }
}

impl From<crate::config::ConfigError> for Failure {
    fn from(e: crate::config::ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

/// Artifacts of a run, in write order. A degenerate or failed run still
/// carries whatever it produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<(&'static str, String)>,
    pub failure: Option<Failure>,
}

impl Outcome {
    fn add(&mut self, name: &'static str, text: String) {
        self.files.push((name, text));
    }
}

pub fn run(cfg: &Config) -> Result<Outcome, Failure> {
    match cfg.experiment {
        Experiment::Hit => HitParams::load(cfg)?.run(),
        Experiment::Dim => DimParams::load(cfg)?.run(),
        Experiment::Sbc => SbcParams::load(cfg)?.run(),
        Experiment::Corr => CorrParams::load(cfg)?.run(),
        Experiment::Verify => VerifyParams::load(cfg)?.run(),
    }
}

fn bad<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Config(msg.into()))
}

fn system(cfg: &Config) -> Result<SystemSpec, Failure> {
    let sys: SystemSpec = cfg.str("system").parse()?;
    sys.check_ergodic()?;
    Ok(sys)
}

#[derive(Clone, Debug)]
enum Centre {
    Fixed(Point),
    /// Drawn from the reference measure with the trial seed.
    Random,
}

fn parse_point(s: &str, space: Space) -> Result<Point, Failure> {
    let coords = s
        .split([',', ' '])
        .filter(|c| !c.is_empty())
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .or_else(|e| bad(format!("bad point `{s}`: {e}")))?;
    if coords.iter().any(|c| !(0.0..1.0).contains(c)) {
        return bad(format!("point `{s}` must have coordinates in [0, 1)"));
    }
    Ok(Point::new(space, &coords)?)
}

fn centre(cfg: &Config, key: &str, space: Space) -> Result<Centre, Failure> {
    match cfg.str(key) {
        "random" => Ok(Centre::Random),
        s => parse_point(s, space).map(Centre::Fixed),
    }
}

/// The configured ladder; `k_max` defaults to `k_min + span` when the experiment has no such key.
fn ladder(cfg: &Config, span: Option<u64>) -> Result<RadiusLadder, Failure> {
    let k_min = cfg.u64("k_min")?;
    let k_max = match span {
        Some(n) => k_min.saturating_add(n),
        None => cfg.u64("k_max")?,
    };
    let l = match cfg.str("ladder") {
        "geometric" => RadiusLadder::geometric(cfg.f64("r0"), cfg.f64("lambda"), k_min, k_max)?,
        "power" => RadiusLadder::power(cfg.f64("beta"), k_min, k_max)?,
        "dyadic" => RadiusLadder::dyadic(k_min, k_max)?,
        "constant" => RadiusLadder::constant(cfg.f64("radius"), k_min, k_max)?,
        other => return bad(format!("unknown ladder `{other}` (geometric, power, dyadic, constant)")),
    };
    match span {
        // Power and geometric ladders may start above k_min so that radii stay below 1/2.
        Some(n) => Ok(l.with_range(l.k_min(), l.k_min() + n)?),
        None => Ok(l),
    }
}

fn tail_window(cfg: &Config, ladder: &RadiusLadder) -> Result<usize, Failure> {
    let w = match cfg.str("tail") {
        "all" => ladder.len(),
        s => s.parse::<usize>().or_else(|_| bad(format!("`tail` must be `all` or a count, got `{s}`")))?,
    };
    if w < 2 || w > ladder.len() {
        return bad(format!("tail window {w} must lie in [2, {}]", ladder.len()));
    }
    Ok(w)
}

fn count(cfg: &Config, key: &str) -> Result<usize, Failure> {
    let v = cfg.u64(key)?;
    if v == 0 {
        return bad(format!("`{key}` must be at least 1"));
    }
    Ok(v as usize)
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Source {
    Exact,
    Empirical(SampleMethod, usize),
}

fn sample_method(cfg: &Config, sys: &SystemSpec, seed: u64) -> Result<SampleMethod, Failure> {
    let orbit = SampleMethod::OrbitSample {
        seed,
        burn_in: cfg.u64("burn_in")?,
        stride: cfg.u64("stride")?,
    };
    match (cfg.str("sample"), sys.measure()) {
        ("iid", MeasureKind::OrbitEmpirical) => bad("iid sampling needs a Lebesgue-invariant system"),
        ("iid", _) | ("auto", MeasureKind::LebesgueExact) => Ok(SampleMethod::IidLebesgue { seed }),
        ("orbit", _) | ("auto", _) => {
            if cfg.u64("stride")? == 0 {
                return bad("`stride` must be at least 1");
            }
            Ok(orbit)
        }
        (other, _) => bad(format!("unknown sample method `{other}` (auto, iid, orbit)")),
    }
}

fn source(cfg: &Config, sys: &SystemSpec, seed: u64) -> Result<Source, Failure> {
    let empirical = || -> Result<Source, Failure> { Ok(Source::Empirical(sample_method(cfg, sys, seed)?, count(cfg, "m")?)) };
    match (cfg.str("measure"), sys.measure()) {
        ("exact", MeasureKind::OrbitEmpirical) => bad("no closed-form measure for this system"),
        ("exact", _) | ("auto", MeasureKind::LebesgueExact) => Ok(Source::Exact),
        ("empirical", _) | ("auto", _) => empirical(),
        (other, _) => bad(format!("unknown measure mode `{other}` (auto, exact, empirical)")),
    }
}

fn source_name(s: Source) -> &'static str {
    match s {
        Source::Exact => "exact",
        Source::Empirical(..) => "empirical",
    }
}

fn draw(sys: &SystemSpec, s: Source) -> Result<Option<EmpiricalMeasure<f64>>, Failure> {
    Ok(match s {
        Source::Exact => None,
        Source::Empirical(method, m) => Some(sample_measure(sys, m, method)?),
    })
}

fn as_source<'a>(sys: &SystemSpec, sample: &'a Option<EmpiricalMeasure<f64>>) -> MeasureSource<'a, f64> {
    match sample {
        Some(s) => MeasureSource::Empirical(s),
        None => MeasureSource::Exact(sys.space()),
    }
}

/// Seed of trial `t`, and the independent seed used to draw a random centre for it.
fn trial_seed(seed: u64, t: u64) -> u64 {
    derive_seed(seed, t)
}

fn centre_seed(seed: u64, t: u64) -> u64 {
    derive_seed(derive_seed(seed, u64::MAX), t)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |v| v.to_string())
}

fn median_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = v.collect();
    (!v.is_empty()).then(|| median(&v))
}

// hit

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum HitMode {
    Hitting,
    Recurrence,
}

struct HitParams {
    sys: SystemSpec,
    mode: HitMode,
    x0: Centre,
    ladder: RadiusLadder,
    tail: usize,
    trials: u64,
    n_max: u64,
    seed: u64,
}

impl HitParams {
    fn load(cfg: &Config) -> Result<Self, Failure> {
        let sys = system(cfg)?;
        let mode = match cfg.str("mode") {
            "hitting" => HitMode::Hitting,
            "recurrence" => HitMode::Recurrence,
            other => return bad(format!("unknown mode `{other}` (hitting, recurrence)")),
        };
        let ladder = ladder(cfg, None)?;
        if !ladder.is_strictly_decreasing() {
            return Err(Error::LadderNotDecreasing.into());
        }
        if ladder.iter().any(|(_, r)| !(r > 0.0 && r < 0.5)) {
            return bad("every ladder radius must lie in (0, 1/2)");
        }
        Ok(Self {
            x0: centre(cfg, "x0", sys.space())?,
            tail: tail_window(cfg, &ladder)?,
            trials: count(cfg, "trials")? as u64,
            n_max: count(cfg, "n_max")? as u64,
            seed: cfg.u64("seed")?,
            sys,
            mode,
            ladder,
        })
    }

    fn target(&self, t: u64) -> Point {
        match &self.x0 {
            Centre::Fixed(p) => p.clone(),
            Centre::Random => self.sys.point(&self.sys.random_state(centre_seed(self.seed, t))),
        }
    }

    fn run(self) -> Result<Outcome, Failure> {
        let runs: Vec<(u64, u64, Point, IndicatorRun)> = (0..self.trials)
            .into_par_iter()
            .map(|t| {
                let s = trial_seed(self.seed, t);
                let start = self.sys.random_state(s);
                let (x0, run) = match self.mode {
                    HitMode::Hitting => {
                        let x0 = self.target(t);
                        let run = hitting_indicator(&self.sys, &start, &x0, &self.ladder, self.n_max, self.tail)?;
                        (x0, run)
                    }
                    HitMode::Recurrence => {
                        let x0 = self.sys.point(&start);
                        (x0, recurrence_indicator(&self.sys, &start, &self.ladder, self.n_max, self.tail)?)
                    }
                };
                Ok((t, s, x0, run))
            })
            .collect::<Result<_, Error>>()?;

        let system = self.sys.to_string();
        let mut rows = Csv::new(&["trial", "seed", "system", "x0", "k", "r", "tau", "censored"]);
        let mut summary = Csv::new(&["trial", "seed", "slope_ls", "slope_upper", "slope_lower", "infinite"]);
        for (t, s, x0, run) in &runs {
            for ((k, _), rec) in self.ladder.iter().zip(&run.records) {
                let (tau, censored) = match rec.tau {
                    Tau::Hit(n) => (n, false),
                    Tau::Censored(n) => (n, true),
                };
                rows.row(&[&t, &s, &system, &x0, &k, &rec.radius, &tau, &censored]);
            }
            let e = &run.estimate;
            summary.row(&[&t, &s, &e.slope_ls, &e.slope_upper, &e.slope_lower, &e.infinite]);
        }

        let finite: Vec<&IndicatorRun> = runs.iter().map(|r| &r.3).filter(|r| !r.estimate.infinite).collect();
        let censored_records: usize = runs.iter().map(|r| r.3.records.iter().filter(|x| x.tau.is_censored()).count()).sum();
        let mut report = String::new();
        let _ = writeln!(report, "experiment = hit");
        let _ = writeln!(report, "system = {system}");
        let _ = writeln!(report, "mode = {}", if self.mode == HitMode::Hitting { "hitting" } else { "recurrence" });
        let _ = writeln!(report, "ladder = {}", self.ladder);
        let _ = writeln!(report, "tail_window = {}", self.tail);
        let _ = writeln!(report, "trials = {}", self.trials);
        let _ = writeln!(report, "infinite_trials = {}", runs.len() - finite.len());
        let _ = writeln!(report, "censored_records = {censored_records}");
        for (name, f) in [
            ("median_slope_ls", (|e: &IndicatorRun| e.estimate.slope_ls) as fn(&IndicatorRun) -> f64),
            ("median_slope_upper", |e| e.estimate.slope_upper),
            ("median_slope_lower", |e| e.estimate.slope_lower),
        ] {
            let _ = writeln!(report, "{name} = {}", fmt_opt(median_of(finite.iter().map(|r| f(r)))));
        }
        if self.sys.measure() == MeasureKind::LebesgueExact {
            let _ = writeln!(report, "dimension_exact = {}", self.sys.space().dim());
        }

        let mut out = Outcome::default();
        out.add("hitting.csv", rows.finish());
        out.add("summary.csv", summary.finish());
        out.add("report.txt", report);
        if finite.is_empty() {
            out.failure = Some(Failure::Degenerate("every trial was censored in the tail window".into()));
        }
        Ok(out)
    }
}

// dim

struct DimParams {
    sys: SystemSpec,
    x0: Centre,
    ladder: RadiusLadder,
    tail: usize,
    trials: u64,
    source: Source,
    count_floor: usize,
    seed: u64,
}

impl DimParams {
    fn load(cfg: &Config) -> Result<Self, Failure> {
        let sys = system(cfg)?;
        let ladder = ladder(cfg, None)?;
        if ladder.iter().any(|(_, r)| !(r > 0.0 && r < 0.5)) {
            return bad("every ladder radius must lie in (0, 1/2)");
        }
        let seed = cfg.u64("seed")?;
        Ok(Self {
            x0: centre(cfg, "x0", sys.space())?,
            tail: tail_window(cfg, &ladder)?,
            trials: count(cfg, "trials")? as u64,
            source: source(cfg, &sys, seed)?,
            count_floor: cfg.u64("count_floor")? as usize,
            sys,
            ladder,
            seed,
        })
    }

    fn run(self) -> Result<Outcome, Failure> {
        let sample = draw(&self.sys, self.source)?;
        let src = as_source(&self.sys, &sample);
        let mode = source_name(self.source);
        let mut rows = Csv::new(&["trial", "seed", "x0", "k", "r", "mu_ball", "mode"]);
        let mut summary = Csv::new(&["trial", "seed", "x0", "d_ls", "d_upper", "d_lower", "excluded"]);
        let mut slopes = Vec::new();
        let mut degenerate = None;
        for t in 0..self.trials {
            let s = trial_seed(self.seed, t);
            let x0 = match &self.x0 {
                Centre::Fixed(p) => p.clone(),
                Centre::Random => self.sys.point(&self.sys.random_state(centre_seed(self.seed, t))),
            };
            let run = match local_dimension(src, &x0, &self.ladder, self.tail, self.count_floor) {
                Ok(r) => r,
                Err(e @ Error::InsufficientSample { .. }) => {
                    degenerate.get_or_insert(format!("trial {t}: {e}"));
                    summary.row(&[&t, &s, &x0, &"nan", &"nan", &"nan", &"all"]);
                    continue;
                }
                Err(e) => return Err(e.into()),
            };
            for (k, r, mu) in &run.measures {
                rows.row(&[&t, &s, &x0, k, r, mu, &mode]);
            }
            let e = &run.estimate;
            let excluded: Vec<String> = run.excluded.iter().map(|k| k.to_string()).collect();
            summary.row(&[&t, &s, &x0, &e.slope_ls, &e.slope_upper, &e.slope_lower, &excluded.join(" ")]);
            slopes.push(e.slope_ls);
        }
        let mut report = String::new();
        let _ = writeln!(report, "experiment = dim");
        let _ = writeln!(report, "system = {}", self.sys);
        let _ = writeln!(report, "measure = {mode}");
        if let Some(s) = &sample {
            let _ = writeln!(report, "sample_size = {}", s.len());
        }
        let _ = writeln!(report, "ladder = {}", self.ladder);
        let _ = writeln!(report, "tail_window = {}", self.tail);
        let _ = writeln!(report, "trials = {}", self.trials);
        let _ = writeln!(report, "fitted_trials = {}", slopes.len());
        let _ = writeln!(report, "median_d_ls = {}", fmt_opt(median_of(slopes.iter().copied())));

        let mut out = Outcome::default();
        out.add("dimension.csv", rows.finish());
        out.add("summary.csv", summary.finish());
        out.add("report.txt", report);
        if slopes.is_empty() {
            out.failure = degenerate.map(Failure::Degenerate);
        }
        Ok(out)
    }
}

// corr

struct Observables {
    phi: Observable<f64>,
    psi: Observable<f64>,
    lags: Vec<u64>,
}

impl Observables {
    fn load(cfg: &Config, space: Space) -> Result<Self, Failure> {
        let bump = |p: &str| -> Result<Observable<f64>, Failure> {
            let x0 = parse_point(cfg.str(&format!("{p}_x0")), space)?;
            Ok(Observable::bump(x0, cfg.f64(&format!("{p}_r_in")), cfg.f64(&format!("{p}_r_out")))?)
        };
        let max_lag = count(cfg, "max_lag")? as u64;
        Ok(Self {
            phi: bump("phi")?,
            psi: bump("psi")?,
            lags: default_lags(max_lag),
        })
    }
}

struct CorrParams {
    sys: SystemSpec,
    obs: Observables,
    method: SampleMethod,
    m: usize,
    seed: u64,
}

impl CorrParams {
    fn load(cfg: &Config) -> Result<Self, Failure> {
        let sys = system(cfg)?;
        let seed = cfg.u64("seed")?;
        Ok(Self {
            obs: Observables::load(cfg, sys.space())?,
            method: sample_method(cfg, &sys, seed)?,
            m: count(cfg, "m")?,
            sys,
            seed,
        })
    }

    /// Series, fit result and the normalized model when the fit succeeded.
    fn fit(&self) -> Result<(hittingdim_core::correlation::CorrelationSeries, Result<DecayModel, Error>), Failure> {
        let sample = sample_measure(&self.sys, self.m, self.method)?;
        let series = correlation_series(&self.sys, &self.obs.phi, &self.obs.psi, &self.obs.lags, &sample)?;
        let model = decay_fit(&series);
        Ok((series, model))
    }

    fn run(self) -> Result<Outcome, Failure> {
        let (series, model) = self.fit()?;
        let used: Vec<u64> = model.as_ref().map(|m| m.fitted_lags.clone()).unwrap_or_default();
        let mut rows = Csv::new(&["seed", "n", "c_hat", "se", "used_in_fit"]);
        for e in &series.entries {
            rows.row(&[&self.seed, &e.n, &e.c_hat, &e.se, &used.contains(&e.n)]);
        }
        let mut out = Outcome::default();
        out.add("correlation.csv", rows.finish());
        let mut report = String::new();
        let _ = writeln!(report, "experiment = corr");
        let _ = writeln!(report, "system = {}", self.sys);
        let _ = writeln!(report, "sample_size = {}", self.m);
        let _ = writeln!(report, "lags = {}", self.obs.lags.len());
        let _ = writeln!(report, "signal_lags = {}", series.entries.iter().filter(|e| e.is_signal()).count());
        match model {
            Ok(m) => {
                let norm = m.normalized(&self.obs.phi, &self.obs.psi);
                let mut csv = Csv::new(&["seed", "class", "param", "C", "C_normalized", "exp_rss", "poly_rss"]);
                let (er, pr) = m.quality.map_or((None, None), |q| (Some(q.exponential_rss), Some(q.polynomial_rss)));
                csv.row(&[
                    &self.seed,
                    &m.class.name(),
                    &m.class.param(),
                    &m.normalization,
                    &norm.normalization,
                    &fmt_opt(er),
                    &fmt_opt(pr),
                ]);
                out.add("model.csv", csv.finish());
                let _ = writeln!(report, "class = {}", m.class.name());
                let _ = writeln!(report, "param = {}", m.class.param());
                let _ = writeln!(report, "C = {}", m.normalization);
                let _ = writeln!(report, "C_normalized = {}", norm.normalization);
                out.add("report.txt", report);
                if m.class == DecayClass::Undetermined {
                    out.failure = Some(Failure::Degenerate("decay class undetermined".into()));
                }
            }
            Err(e) => {
                let _ = writeln!(report, "class = undetermined");
                let _ = writeln!(report, "error = {e}");
                out.add("report.txt", report);
                out.failure = Some(e.into());
            }
        }
        Ok(out)
    }
}

// sbc

enum PhiSpec {
    Fit(CorrParams),
    Given(DecayModel),
}

fn parse_phi(s: &str) -> Result<Option<DecayModel>, Failure> {
    if s == "fit" {
        return Ok(None);
    }
    let (kind, args) = s.split_once(':').unwrap_or((s, ""));
    let nums = args
        .split(',')
        .filter(|a| !a.is_empty())
        .map(|a| a.trim().parse::<f64>())
        .collect::<Result<Vec<f64>, _>>()
        .or_else(|e| bad(format!("bad phi `{s}`: {e}")))?;
    let model = match (kind, nums.as_slice()) {
        ("exponential", &[c, rate]) if c > 0.0 && rate > 0.0 => DecayModel::exponential(c, rate),
        ("polynomial", &[c, p]) if c > 0.0 && p > 0.0 => DecayModel::polynomial(c, p),
        ("constant", &[c]) if c > 0.0 => DecayModel::constant(c),
        _ => return bad(format!("bad phi `{s}` (fit, exponential:C,rate, polynomial:C,p, constant:C)")),
    };
    Ok(Some(model))
}

struct SbcParams {
    sys: SystemSpec,
    x0: Point,
    ladder: RadiusLadder,
    checkpoints: Vec<u64>,
    trials: u64,
    source: Source,
    phi: PhiSpec,
    alpha: f64,
    epsilon: f64,
    c1: f64,
    c2: f64,
    seed: u64,
}

impl SbcParams {
    fn load(cfg: &Config) -> Result<Self, Failure> {
        let sys = system(cfg)?;
        let seed = cfg.u64("seed")?;
        let x0 = match centre(cfg, "x0", sys.space())? {
            Centre::Fixed(p) => p,
            Centre::Random => sys.point(&sys.random_state(centre_seed(seed, 0))),
        };
        let n_max = count(cfg, "n_max")? as u64;
        let ladder = ladder(cfg, Some(n_max))?;
        let checkpoints = match cfg.str("checkpoints") {
            "decades" => default_checkpoints(n_max),
            s => s
                .split(',')
                .map(|c| c.trim().parse::<u64>())
                .collect::<Result<Vec<u64>, _>>()
                .or_else(|e| bad(format!("bad checkpoints `{s}`: {e}")))?,
        };
        if checkpoints.last() != Some(&n_max) || checkpoints[0] == 0 || checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return bad("checkpoints must increase strictly from at least 1 and end at n_max");
        }
        let phi = match parse_phi(cfg.str("phi"))? {
            Some(m) => PhiSpec::Given(m),
            None => PhiSpec::Fit(CorrParams {
                obs: Observables::load(cfg, sys.space())?,
                method: sample_method(cfg, &sys, seed)?,
                m: count(cfg, "m")?,
                sys: sys.clone(),
                seed,
            }),
        };
        let (alpha, epsilon) = (cfg.f64("alpha"), cfg.f64("epsilon"));
        if !(alpha > 0.0 && epsilon > 0.0) {
            return bad("`alpha` and `epsilon` must be positive");
        }
        Ok(Self {
            source: source(cfg, &sys, seed)?,
            trials: cfg.u64("trials")?,
            c1: cfg.f64("c1"),
            c2: cfg.f64("c2"),
            sys,
            x0,
            ladder,
            checkpoints,
            phi,
            alpha,
            epsilon,
            seed,
        })
    }

    fn run(self) -> Result<Outcome, Failure> {
        let n_max = *self.checkpoints.last().expect("validated");
        let targets = build_targets(self.x0.clone(), self.ladder)?;
        let phi = match &self.phi {
            PhiSpec::Given(m) => m.clone(),
            PhiSpec::Fit(c) => c.fit()?.1?.normalized(&c.obs.phi, &c.obs.psi),
        };
        let bound = VarianceBound {
            phi: phi.clone(),
            alpha: self.alpha,
            c1: self.c1,
            c2: self.c2,
        };
        let sample = draw(&self.sys, self.source)?;
        let src = as_source(&self.sys, &sample);
        let ens = sbc_ensemble(&self.sys, &targets, &src, &self.checkpoints, self.trials, self.seed, Some(&bound))?;

        let mut rows = Csv::new(&["trial", "seed", "N", "Z", "EZ", "ratio"]);
        for (t, s, series) in &ens.trials {
            for i in 0..series.checkpoints.len() {
                rows.row(&[t, s, &series.checkpoints[i], &series.z[i], &series.ez[i], &series.ratio[i]]);
            }
        }
        let mut var = Csv::new(&["seed", "N", "EZ", "mean_ratio", "sd_ratio", "var_emp", "bound", "ratio"]);
        for c in &ens.checkpoints {
            var.row(&[&self.seed, &c.n, &c.ez, &c.mean_ratio, &c.sd_ratio, &c.var_z, &fmt_opt(c.bound), &fmt_opt(c.bound_ratio())]);
        }

        let mut out = Outcome::default();
        out.add("sbc.csv", rows.finish());
        out.add("variance.csv", var.finish());
        let last = ens.checkpoints.last().expect("at least one checkpoint");
        let mut report = String::new();
        let _ = writeln!(report, "experiment = sbc");
        let _ = writeln!(report, "system = {}", self.sys);
        let _ = writeln!(report, "x0 = {}", self.x0);
        let _ = writeln!(report, "ladder = {}", self.ladder);
        let _ = writeln!(report, "measure = {}", source_name(self.source));
        let _ = writeln!(report, "trials = {}", self.trials);
        let _ = writeln!(report, "phi = {} param={} C={}", phi.class.name(), phi.class.param(), phi.normalization);
        let _ = writeln!(report, "N = {n_max}");
        let _ = writeln!(report, "EZ = {}", last.ez);
        let _ = writeln!(report, "mean_ratio = {}", last.mean_ratio);
        let _ = writeln!(report, "sd_ratio = {}", last.sd_ratio);
        let _ = writeln!(report, "variance_bound_holds = {}", ens.bound_holds().unwrap_or(false));
        let _ = writeln!(report, "weak_divergence = {}", ens.trials.iter().any(|t| t.2.weak_divergence));

        let decreasing = self.ladder.is_strictly_decreasing();
        if decreasing && n_max >= 8 {
            match check_corollary(&targets, &src, &phi, self.alpha, self.epsilon, n_max) {
                Ok(c) => {
                    let _ = writeln!(report, "verdict = {}", c.verdict);
                    out.add("corollary.txt", c.to_string());
                }
                Err(Error::UndeterminedDecay) => {
                    let _ = writeln!(report, "verdict = undetermined");
                    out.add("corollary.txt", "verdict = undetermined\n".into());
                }
                Err(e) => return Err(e.into()),
            }
        }
        out.add("report.txt", report);
        Ok(out)
    }
}

// verify

struct VerifyParams {
    cfg: VerifyConfig,
    monte_carlo: Option<usize>,
}

impl VerifyParams {
    fn load(cfg: &Config) -> Result<Self, Failure> {
        Ok(Self {
            cfg: VerifyConfig {
                seed: cfg.u64("seed")?,
                trials: count(cfg, "trials")? as u64,
                lipschitz_pairs: count(cfg, "lipschitz_pairs")? as u64,
                crosscheck_seeds: count(cfg, "crosscheck_seeds")? as u64,
                crosscheck_n_max: count(cfg, "crosscheck_n_max")? as u64,
            },
            monte_carlo: if cfg.bool("monte_carlo") { Some(count(cfg, "m")?) } else { None },
        })
    }

    fn run(self) -> Result<Outcome, Failure> {
        let checks = verify::run_all(&self.cfg)?;
        let mut text = String::new();
        let mut failed: Vec<String> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.to_string()).collect();
        for c in &checks {
            let _ = writeln!(text, "{c}");
        }
        if let Some(m) = self.monte_carlo {
            let sys = SystemSpec::doubling();
            let cmp = verify::dyadic_monte_carlo(&sys, m, self.cfg.seed)?;
            let outside = cmp.iter().filter(|c| !c.within(3.0)).count();
            // Each comparison misses its 3se band with probability about 0.0027.
            let expected = 0.0027 * cmp.len() as f64;
            let limit = expected + 3.0 * expected.sqrt();
            let ok = (outside as f64) <= limit;
            let _ = writeln!(
                text,
                "{} dyadic_monte_carlo: {} cases, {} outside 3se (expected {:.1}, limit {:.1})",
                if ok { "PASS" } else { "FAIL" },
                cmp.len(),
                outside,
                expected,
                limit
            );
            if !ok {
                failed.push("dyadic_monte_carlo".into());
            }
        }
        let mut out = Outcome::default();
        out.add("verify.txt", text);
        if !failed.is_empty() {
            out.failure = Some(Failure::Verification(format!("failed checks: {}", failed.join(", "))));
        }
        Ok(out)
    }
}
