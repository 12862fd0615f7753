//! Monte Carlo estimates of the invariant measure with a grid index for ball counts.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::systems::{distance, OrbitState, Point, Space, SystemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMethod {
    /// Independent Lebesgue-uniform points; point `i` uses `derive_seed(seed, i)`.
    IidLebesgue { seed: u64 },
    /// One orbit from a random start: drop `burn_in` iterates, then keep every `stride`-th.
    OrbitSample { seed: u64, burn_in: u64, stride: u64 },
}

impl SampleMethod {
    pub fn seed(&self) -> u64 {
        match *self {
            SampleMethod::IidLebesgue { seed } | SampleMethod::OrbitSample { seed, .. } => seed,
        }
    }
}

/// Default grid resolution (cells per unit length) for a space.
pub fn default_cells(space: Space) -> usize {
    match space {
        Space::Circle => 1 << 14,
        Space::Torus2 => 1 << 9,
    }
}

/// A finite sample standing in for `μ`.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure<T> {
    system: SystemSpec<T>,
    method: SampleMethod,
    points: Vec<Point<T>>,
    cells: usize,
    /// Sample indices grouped by cell; cell `c` owns `order[starts[c]..starts[c + 1]]`.
    order: Vec<u32>,
    starts: Vec<u32>,
}

/// Draw `m` points from the system's reference measure.
pub fn sample_measure<T: Scalar>(sys: &SystemSpec<T>, m: usize, method: SampleMethod) -> Result<EmpiricalMeasure<T>> {
    if m == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    if m > u32::MAX as usize {
        return Err(Error::InvalidArgument("sample size exceeds 2^32 - 1".into()));
    }
    let points = match method {
        SampleMethod::IidLebesgue { seed } => (0..m)
            .into_par_iter()
            .map(|i| sys.point(&sys.random_state(derive_seed(seed, i as u64))))
            .collect(),
        SampleMethod::OrbitSample { seed, burn_in, stride } => {
            if stride == 0 {
                return Err(Error::InvalidArgument("stride must be at least 1".into()));
            }
            let mut state = sys.random_state(seed);
            sys.advance_by(&mut state, burn_in)?;
            let mut points = Vec::with_capacity(m);
            points.push(sys.point(&state));
            for _ in 1..m {
                sys.advance_by(&mut state, stride)?;
                points.push(sys.point(&state));
            }
            points
        }
    };
    EmpiricalMeasure::from_points(sys.clone(), method, points, default_cells(sys.space()))
}

impl<T: Scalar> EmpiricalMeasure<T> {
    /// Index an explicit point set with `cells` grid cells per coordinate.
    pub fn from_points(system: SystemSpec<T>, method: SampleMethod, points: Vec<Point<T>>, cells: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empirical measure needs at least one point".into()));
        }
        if cells == 0 {
            return Err(Error::InvalidArgument("grid needs at least one cell".into()));
        }
        if let Some(p) = points.iter().find(|p| p.space() != system.space()) {
            return Err(Error::InvalidPoint(format!("sample point {p} is not on {:?}", system.space())));
        }
        let dim = system.space().dim();
        let total = cells.pow(dim as u32);
        let keys: Vec<usize> = points.iter().map(|p| cell_key(p, cells)).collect();
        let mut starts = vec![0u32; total + 1];
        for &k in &keys {
            starts[k + 1] += 1;
        }
        for c in 0..total {
            starts[c + 1] += starts[c];
        }
        let mut fill = starts.clone();
        let mut order = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        Ok(Self {
            system,
            method,
            points,
            cells,
            order,
            starts,
        })
    }

    pub fn system(&self) -> &SystemSpec<T> {
        &self.system
    }

    pub fn method(&self) -> SampleMethod {
        self.method
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    /// Orbit state the `i`-th sample point was drawn from, for pushing it forward.
    pub fn state(&self, i: usize) -> Result<OrbitState<T>> {
        let sys = &self.system;
        match self.method {
            SampleMethod::IidLebesgue { seed } => Ok(sys.random_state(derive_seed(seed, i as u64))),
            SampleMethod::OrbitSample { seed, burn_in, stride } => {
                if sys.backend() == crate::systems::Backend::Bitstream {
                    let mut st = sys.random_state(seed);
                    sys.advance_by(&mut st, burn_in + stride * i as u64)?;
                    Ok(st)
                } else {
                    sys.start(&self.points[i])
                }
            }
        }
    }

    /// Number of sample points in the open ball `B(x0, r)`, through the grid index.
    pub fn ball_count(&self, x0: &Point<T>, r: &T) -> usize {
        let n = self.cells as i64;
        let w = 1.0 / self.cells as f64;
        let rf = r.to_f64_lossy();
        let ranges: Vec<Vec<usize>> = x0
            .coords()
            .iter()
            .map(|c| {
                let c = c.to_f64_lossy();
                // One cell of slack on each side absorbs rounding in the cell assignment.
                let lo = ((c - rf) / w).floor() as i64 - 1;
                let hi = ((c + rf) / w).floor() as i64 + 1;
                if hi - lo + 1 >= n {
                    (0..self.cells).collect()
                } else {
                    (lo..=hi).map(|i| i.rem_euclid(n) as usize).collect()
                }
            })
            .collect();
        let mut count = 0;
        let mut scan = |cell: usize| {
            let (a, b) = (self.starts[cell] as usize, self.starts[cell + 1] as usize);
            count += self.order[a..b]
                .iter()
                .filter(|&&i| distance(&self.points[i as usize], x0) < *r)
                .count();
        };
        match ranges.as_slice() {
            [xs] => xs.iter().for_each(|&c| scan(c)),
            [xs, ys] => {
                for &cx in xs {
                    for &cy in ys {
                        scan(cx * self.cells + cy);
                    }
                }
            }
            _ => unreachable!(),
        }
        count
    }

    /// Ball count by scanning every point; the reference for the indexed count.
    pub fn ball_count_linear(&self, x0: &Point<T>, r: &T) -> usize {
        self.points.iter().filter(|p| distance(p, x0) < *r).count()
    }

    pub fn ball_fraction(&self, x0: &Point<T>, r: &T) -> f64 {
        self.ball_count(x0, r) as f64 / self.len() as f64
    }
}

fn cell_key<T: Scalar>(p: &Point<T>, cells: usize) -> usize {
    let idx = |c: &T| ((c.to_f64_lossy() * cells as f64) as usize).min(cells - 1);
    match p.coords() {
        [x] => idx(x),
        [x, y] => idx(x) * cells + idx(y),
        _ => unreachable!(),
    }
}
