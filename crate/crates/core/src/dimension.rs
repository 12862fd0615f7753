//! Ball measures and local dimension estimates.

use crate::error::{Error, Result};
use crate::hitting::{RadiusLadder, Role, ScalingEstimate};
use crate::measure::EmpiricalMeasure;
use crate::scalar::Scalar;
use crate::systems::{Point, Space};

/// Minimum sample count for a radius to enter an empirical fit.
pub const DEFAULT_COUNT_FLOOR: usize = 100;

/// Where ball measures come from.
#[derive(Clone, Copy, Debug)]
pub enum MeasureSource<'a, T> {
    /// Lebesgue measure on the given space, in closed form.
    Exact(Space),
    Empirical(&'a EmpiricalMeasure<T>),
}

impl<T: Scalar> MeasureSource<'_, T> {
    /// `μ(B(x0, r))` for the open ball.
    pub fn ball_measure(&self, x0: &Point<T>, r: f64) -> Result<f64> {
        if !(r > 0.0 && r < 0.5) {
            return Err(Error::InvalidRadius(r));
        }
        Ok(match self {
            MeasureSource::Exact(Space::Circle) => 2.0 * r,
            MeasureSource::Exact(Space::Torus2) => (2.0 * r) * (2.0 * r),
            MeasureSource::Empirical(m) => m.ball_fraction(x0, &T::from_f64(r)),
        })
    }

    /// Raw count behind an empirical estimate.
    pub fn ball_count(&self, x0: &Point<T>, r: f64) -> Option<usize> {
        match self {
            MeasureSource::Exact(_) => None,
            MeasureSource::Empirical(m) => Some(m.ball_count(x0, &T::from_f64(r))),
        }
    }
}

/// Local dimension fit together with the ball measures it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct DimensionRun {
    /// `(k, r_k, μ(B(x0, r_k)))` for every ladder radius.
    pub measures: Vec<(u64, f64, f64)>,
    /// Ladder indices dropped for falling below the count floor.
    pub excluded: Vec<u64>,
    pub estimate: ScalingEstimate,
}

/// `d_μ(x0)` and its upper/lower proxies from `ln μ(B(x0, r_k))` against `ln r_k`.
///
/// In exact mode the slopes are the dimension of the space, which the closed form
/// `μ(B) = (2r)^d` gives at every radius pair. Empirical radii with fewer than
/// `count_floor` points are excluded, and the tail window shrinks accordingly.
pub fn local_dimension<T: Scalar>(
    source: MeasureSource<'_, T>,
    x0: &Point<T>,
    ladder: &RadiusLadder,
    tail_window: usize,
    count_floor: usize,
) -> Result<DimensionRun> {
    if tail_window > ladder.len() || tail_window < 2 {
        return Err(Error::InvalidArgument(format!(
            "tail window {tail_window} must lie in [2, {}]",
            ladder.len()
        )));
    }
    let mut measures = Vec::with_capacity(ladder.len());
    let mut excluded = Vec::new();
    let mut points = Vec::new();
    let tail_start = ladder.k_max() + 1 - tail_window as u64;
    let mut tail_used = 0;
    for (k, r) in ladder.iter() {
        let mu = source.ball_measure(x0, r)?;
        measures.push((k, r, mu));
        if let Some(c) = source.ball_count(x0, r) {
            if c < count_floor.max(1) {
                excluded.push(k);
                continue;
            }
        }
        points.push((r.ln(), mu.ln()));
        if k >= tail_start {
            tail_used += 1;
        }
    }
    let estimate = match source {
        MeasureSource::Exact(space) => ScalingEstimate::exact(Role::Dimension, points, tail_window, space.dim() as f64),
        MeasureSource::Empirical(_) => {
            if tail_used < 3 {
                return Err(Error::InsufficientSample { surviving: tail_used });
            }
            // Survivors of the tail window are the last `tail_used` points.
            ScalingEstimate::fit(Role::Dimension, points, tail_used)?
        }
    };
    Ok(DimensionRun {
        measures,
        excluded,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{sample_measure, SampleMethod};
    use crate::systems::SystemSpec;

    #[test]
    fn exact_ball_measures() {
        let c = MeasureSource::<f64>::Exact(Space::Circle);
        assert!((c.ball_measure(&Point::circle(0.7), 0.1).unwrap() - 0.2).abs() < 1e-15);
        let t = MeasureSource::<f64>::Exact(Space::Torus2);
        assert!((t.ball_measure(&Point::torus(0.7, 0.1), 0.1).unwrap() - 0.04).abs() < 1e-15);
        assert_eq!(c.ball_measure(&Point::circle(0.1), 0.5), Err(Error::InvalidRadius(0.5)));
    }

    #[test]
    fn exact_slopes() {
        let ladder = RadiusLadder::dyadic(2, 20).unwrap();
        let run = local_dimension(MeasureSource::<f64>::Exact(Space::Circle), &Point::circle(0.3), &ladder, 8, 100).unwrap();
        assert_eq!(run.estimate.slope_ls, 1.0);
        assert_eq!(run.estimate.slope_upper - run.estimate.slope_lower, 0.0);
        // The closed form really has two-point slope 1 up to rounding.
        for w in run.estimate.points.windows(2) {
            assert!(((w[1].1 - w[0].1) / (w[1].0 - w[0].0) - 1.0).abs() < 1e-12);
        }
        let run = local_dimension(MeasureSource::<f64>::Exact(Space::Torus2), &Point::torus(0.3, 0.6), &ladder, 8, 100).unwrap();
        assert_eq!(run.estimate.slope_ls, 2.0);
    }

    #[test]
    fn small_samples_are_rejected() {
        let sys = SystemSpec::<f64>::doubling();
        let mu = sample_measure(&sys, 1000, SampleMethod::IidLebesgue { seed: 1 }).unwrap();
        let ladder = RadiusLadder::dyadic(2, 20).unwrap();
        let err = local_dimension(MeasureSource::Empirical(&mu), &Point::circle(0.3), &ladder, 8, 100).unwrap_err();
        assert!(matches!(err, Error::InsufficientSample { .. }));
    }

    #[test]
    fn empirical_lebesgue_slope_near_one() {
        let sys = SystemSpec::<f64>::doubling();
        let mu = sample_measure(&sys, 200_000, SampleMethod::IidLebesgue { seed: 4 }).unwrap();
        let ladder = RadiusLadder::dyadic(2, 10).unwrap();
        let run = local_dimension(MeasureSource::Empirical(&mu), &Point::circle(0.3), &ladder, 8, 100).unwrap();
        assert!(run.excluded.is_empty());
        assert!((run.estimate.slope_ls - 1.0).abs() < 0.05, "{:?}", run.estimate);
    }
}
