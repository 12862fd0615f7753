use hittingdim_core::measure::{sample_measure, SampleMethod};
use hittingdim_core::rng::{derive_seed, rng_from_seed};
use hittingdim_core::scalar::ratio;
use hittingdim_core::systems::{self, distance, Family};
use hittingdim_core::{Backend, BitTape, Point, Space, SystemSpec};
use num_rational::BigRational;
use proptest::prelude::*;
use rand::Rng;

fn grid_point(rng: &mut impl Rng, space: Space) -> Point {
    let g = |rng: &mut dyn rand::RngCore| rng.random_range(0u64..1 << 40) as f64 / (1u64 << 40) as f64;
    match space {
        Space::Circle => Point::circle(g(rng)),
        Space::Torus2 => Point::torus(g(rng), g(rng)),
    }
}

#[test]
fn metric_axioms_on_random_triples() {
    let mut rng = rng_from_seed(99);
    for i in 0..100_000 {
        let space = if i % 2 == 0 { Space::Circle } else { Space::Torus2 };
        let (x, y, z) = (grid_point(&mut rng, space), grid_point(&mut rng, space), grid_point(&mut rng, space));
        assert_eq!(distance(&x, &x), 0.0);
        assert_eq!(distance(&x, &y), distance(&y, &x));
        assert!(distance(&x, &y) <= 0.5);
        assert!(x == y || distance(&x, &y) > 0.0);
        assert!(distance(&x, &z) <= distance(&x, &y) + distance(&y, &z), "{x} {y} {z}");
    }
}

fn rational() -> impl Strategy<Value = BigRational> {
    (0i64..1 << 20, 1i64..1 << 20).prop_map(|(n, d)| ratio(n % d, d))
}

proptest! {
    #[test]
    fn rational_metric_axioms(a in rational(), b in rational(), c in rational()) {
        let (x, y, z) = (systems::Point::circle(a), systems::Point::circle(b), systems::Point::circle(c));
        prop_assert_eq!(distance(&x, &y), distance(&y, &x));
        prop_assert!(distance(&x, &z) <= distance(&x, &y) + distance(&y, &z));
    }

    #[test]
    fn maps_respect_their_lipschitz_constant(a in rational(), b in rational(), c in rational(), d in rational()) {
        let families: Vec<Family<BigRational>> = vec![
            Family::Doubling,
            Family::Tent,
            Family::Cat,
            Family::Rotation { alpha: ratio(3, 7) },
        ];
        for fam in families {
            let sys = systems::SystemSpec::<BigRational>::new(fam.clone(), Backend::Float).unwrap().allowing_rational_angle();
            let (x, y) = match sys.space() {
                Space::Circle => (systems::Point::circle(a.clone()), systems::Point::circle(b.clone())),
                Space::Torus2 => (systems::Point::torus(a.clone(), c.clone()), systems::Point::torus(b.clone(), d.clone())),
            };
            let l = BigRational::from_float(fam.lipschitz_constant()).unwrap();
            prop_assert!(distance(&sys.step(&x), &sys.step(&y)) <= l * distance(&x, &y), "{}", fam.name());
        }
    }

    #[test]
    fn fixed_and_bitstream_orbits_agree(seed in any::<u64>(), budget in 64u32..600, n in 1u64..700) {
        let fixed = SystemSpec::new(Family::Doubling, Backend::Fixed { bit_budget: budget }).unwrap();
        let bits = SystemSpec::doubling();
        let steps = n.min((budget - 10) as u64);
        let a: Vec<_> = fixed.orbit(fixed.start_tape(BitTape::seeded(seed)).unwrap(), steps).collect::<Result<_, _>>().unwrap();
        let b: Vec<_> = bits.orbit(bits.start_tape(BitTape::seeded(seed)).unwrap(), steps).collect::<Result<_, _>>().unwrap();
        // The fixed expansion is zero beyond the budget; compare the bits both still hold.
        for (i, (p, q)) in a.iter().zip(&b).enumerate() {
            let held = (budget as i64 - i as i64 - 1).min(53) as i32;
            let scale = 2f64.powi(held);
            prop_assert_eq!((p.x() * scale).floor(), (q.x() * scale).floor(), "step {}", i + 1);
        }
    }
}

#[test]
fn orbits_are_deterministic() {
    for spec in ["doubling", "tent", "cat", "rotation:alpha=golden", "mp:s=0.5"] {
        let sys: SystemSpec = spec.parse().unwrap();
        let run = || -> Vec<Point> { sys.orbit(sys.random_state(17), 500).map(|p| p.unwrap()).collect() };
        assert_eq!(run(), run(), "{spec}");
    }
}

#[test]
fn lebesgue_is_preserved() {
    let m = 100_000usize;
    for spec in ["doubling", "tent", "cat", "rotation:alpha=golden"] {
        let sys: SystemSpec = spec.parse().unwrap();
        let sample = sample_measure(&sys, m, SampleMethod::IidLebesgue { seed: 3 }).unwrap();
        let images: Vec<Point> = (0..m)
            .map(|i| {
                let mut st = sample.state(i).unwrap();
                sys.advance(&mut st).unwrap();
                sys.point(&st)
            })
            .collect();
        let mut rng = rng_from_seed(derive_seed(5, spec.len() as u64));
        for _ in 0..20 {
            let k = rng.random_range(2..6);
            let r = 0.5f64.powi(k);
            let centre = grid_point(&mut rng, sys.space());
            let inside = |p: &Point| distance(p, &centre) < r;
            let before = sample.points().iter().filter(|p| inside(p)).count() as f64 / m as f64;
            let after = images.iter().filter(|p| inside(p)).count() as f64 / m as f64;
            let mu = (2.0 * r).powi(sys.space().dim() as i32);
            assert!((after - before).abs() <= 4.0 * (mu / m as f64).sqrt(), "{spec}: {before} vs {after} at r={r}");
        }
    }
}

#[test]
fn non_ergodic_rotation_needs_override() {
    let sys: SystemSpec = "rotation:alpha=1/3".parse().unwrap();
    assert!(sys.check_ergodic().is_err());
    let sys: SystemSpec = "rotation:alpha=1/3,allow_rational=true".parse().unwrap();
    assert!(sys.check_ergodic().is_ok());
    assert!("rotation:alpha=golden".parse::<SystemSpec>().unwrap().check_ergodic().is_ok());
}

#[test]
fn system_strings_round_trip() {
    for spec in ["doubling", "tent", "cat", "rotation:alpha=golden", "rotation:alpha=liouville6", "mp:s=0.5", "doubling:backend=fixed:300"] {
        let sys: SystemSpec = spec.parse().unwrap();
        let again: SystemSpec = sys.to_string().parse().unwrap();
        assert_eq!(sys, again, "{spec}");
    }
}
