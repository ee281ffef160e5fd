use czweights::geometry::{Interval, PiecewiseConstant, Weight};
use czweights::muckenhoupt::{ar_characteristic, phi_exact, theoretical_bound, SearchConfig};
use czweights::scalar::Precision;
use czweights::sequences::build_table;
use proptest::prelude::*;
use rug::Rational;

fn step(cuts: &[u32], values: &[u32]) -> PiecewiseConstant {
    let mut breaks = vec![Rational::new()];
    let total: u32 = cuts.iter().sum();
    let mut acc = 0;
    for c in cuts {
        acc += c;
        breaks.push(Rational::from((acc, total)));
    }
    let vals = values.iter().map(|&v| Rational::from((v, 8))).collect();
    PiecewiseConstant::new(breaks, vals, Rational::from(1)).unwrap()
}

fn sup(f: PiecewiseConstant, r: f64) -> f64 {
    ar_characteristic(&f, r, &SearchConfig::default()).unwrap().sup_estimate.to_f64()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn reflection_leaves_the_characteristic_unchanged(
        parts in prop::collection::vec((1u32..6, 1u32..40), 1..5),
        r in prop::sample::select(vec![1.5f64, 2.0, 3.0]),
    ) {
        let (cuts, values): (Vec<u32>, Vec<u32>) = parts.into_iter().unzip();
        let a = sup(step(&cuts, &values), r);
        let rc: Vec<u32> = cuts.iter().rev().cloned().collect();
        let rv: Vec<u32> = values.iter().rev().cloned().collect();
        let b = sup(step(&rc, &rv), r);
        prop_assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn bounded_by_oscillation_and_the_unit_interval(
        parts in prop::collection::vec((1u32..6, 1u32..40), 1..5),
        r in prop::sample::select(vec![1.5f64, 2.0, 3.0]),
    ) {
        let (cuts, values): (Vec<u32>, Vec<u32>) = parts.into_iter().unzip();
        let f = step(&cuts, &values);
        let s = sup(f.clone(), r);
        let mut all = values.clone();
        all.push(8);
        let hi = *all.iter().max().unwrap() as f64;
        let lo = *all.iter().min().unwrap() as f64;
        prop_assert!(s <= hi / lo * (1.0 + 1e-9));
        let w = Weight::new(f).unwrap();
        let unit = Interval::new(Rational::new(), Rational::from(1)).unwrap();
        let at_unit = phi_exact(&w, &unit, &czweights::scalar::rational_from_f64(r).unwrap(), Precision::default()).to_f64();
        prop_assert!(s >= at_unit * (1.0 - 1e-12));
    }
}

#[test]
fn constant_scaling_is_invisible() {
    let f = step(&[1, 3, 2], &[8, 2, 30]);
    let g = f.map_values(|v| Rational::from(v * 7u32));
    let g = PiecewiseConstant::new(g.breaks().to_vec(), g.values().to_vec(), Rational::from(7)).unwrap();
    for r in [1.5, 2.0, 4.0] {
        assert!((sup(f.clone(), r) / sup(g.clone(), r) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn theoretical_bound_exceeds_estimates_at_depth_four() {
    let c = czweights::construct::build(&czweights::construct::BuildParams::new(4)).unwrap();
    for r in [2.5, 3.0, 4.0] {
        let bound = theoretical_bound(r, &build_table(4).unwrap(), Precision::default()).unwrap();
        let est = ar_characteristic(c.w(), r, &SearchConfig::default()).unwrap();
        assert!(est.sup_estimate <= bound, "r={r}");
    }
    assert!(theoretical_bound(2.0, &build_table(4).unwrap(), Precision::default()).is_err());
}
