use czweights::geometry::Interval;
use czweights::whitney::{decompose, depth_for_budget, SIZING};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;

fn random_components(rng: &mut ChaCha8Rng, count: usize) -> Vec<Interval> {
    // Disjoint components with gaps, endpoints on a 1/1024 grid.
    let mut cuts: Vec<i64> = (0..2 * count).map(|_| rng.gen_range(0..1024)).collect();
    cuts.sort();
    cuts.dedup();
    cuts.chunks_exact(2)
        .filter(|c| c[1] > c[0])
        .map(|c| Interval::new(Rational::from((c[0], 1024)), Rational::from((c[1], 1024))).unwrap())
        .collect()
}

#[test]
fn every_cube_is_sized_at_every_depth() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for depth in 1..=12 {
        let omega = random_components(&mut rng, 3);
        let f = decompose(&omega, depth).unwrap();
        let lvl = f.level(1);
        for c in &lvl.cubes {
            // Independent recomputation of the distance to the complement.
            let dist = omega
                .iter()
                .filter(|o| o.contains(&c.interval))
                .map(|o| Rational::from(c.interval.a() - o.a()).min(Rational::from(o.b() - c.interval.b())))
                .next()
                .expect("cube inside a component");
            assert!(c.interval.len() * SIZING <= dist);
        }
        assert!(lvl.covers_omega());
        assert_eq!(lvl.residual_measure(), lvl.omega_measure() * rug::Rational::from((1, 1u64 << depth)));
    }
}

#[test]
fn nested_levels_to_depth_twelve() {
    let unit = Interval::new(Rational::new(), Rational::from(1)).unwrap();
    let mut f = decompose(&[unit], 4).unwrap();
    for _ in 1..12 {
        let cubes = &f.levels().last().unwrap().cubes;
        let picks = [cubes.len() / 3, 2 * cubes.len() / 3];
        let inner: Vec<Interval> = picks.iter().map(|&i| cubes[i].interval.dilate(&Rational::from((1, 2)))).collect();
        f.refine(&inner).unwrap();
    }
    assert_eq!(f.levels().len(), 12);
    assert!(f.sizing_holds());
    assert!(f.nesting_holds());
}

#[test]
fn overlap_constant_on_random_probes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let omega = random_components(&mut rng, 4);
    let f = decompose(&omega, 12).unwrap();
    let mut complement_points: Vec<Rational> = omega.iter().flat_map(|o| [o.a().clone(), o.b().clone()]).collect();
    complement_points.push(Rational::from(-1));
    let probes: Vec<Interval> = (0..1000)
        .map(|_| {
            let c = &complement_points[rng.gen_range(0..complement_points.len())];
            let left = Rational::from((rng.gen_range(1..=1u64 << 20), 1u64 << rng.gen_range(20..40)));
            let right = Rational::from((rng.gen_range(1..=1u64 << 20), 1u64 << rng.gen_range(20..40)));
            Interval::new(Rational::from(c - left), Rational::from(c + right)).unwrap()
        })
        .collect();
    let k = f.level(1).overlap_constant(&probes).unwrap();
    assert!(k <= 2, "overlap {k}");
}

#[test]
fn budget_depth_is_minimal() {
    let m = Rational::from((3, 4));
    let eps = Rational::from((1, 100));
    let d = depth_for_budget(&m, &eps).unwrap();
    assert!(Rational::from(&m / (1u64 << d)) <= eps);
    assert!(Rational::from(&m / (1u64 << (d - 1))) > eps);
}
