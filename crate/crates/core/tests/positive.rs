use czweights::certify::make_forcing;
use czweights::construct::{build, BuildParams};
use czweights::geometry::{Interval, PiecewiseConstant, Weight};
use czweights::positive::{cz_check, ratio_curve, solve, SRange, ENERGY_CAP};
use czweights::scalar::Precision;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rug::Rational;

fn random_step(rng: &mut ChaCha8Rng, lo: i64, hi: i64, den: i64) -> (Vec<Rational>, Vec<Rational>) {
    let pieces = rng.gen_range(1..=12);
    let mut cuts: Vec<i64> = (0..pieces - 1).map(|_| rng.gen_range(1..256)).collect();
    cuts.sort();
    cuts.dedup();
    let mut breaks = vec![Rational::new()];
    breaks.extend(cuts.iter().map(|&c| Rational::from((c, 256))));
    breaks.push(Rational::from(1));
    let values = (1..breaks.len()).map(|_| Rational::from((rng.gen_range(lo..=hi), den))).collect();
    (breaks, values)
}

#[test]
fn energy_identity_and_cap_on_random_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let unit = Interval::new(Rational::new(), Rational::from(1)).unwrap();
    for _ in 0..60 {
        let (wb, wv) = random_step(&mut rng, 4, 64, 16);
        let (fb, fv) = random_step(&mut rng, -16, 16, 16);
        let w = Weight::new(PiecewiseConstant::new(wb, wv, Rational::from(1)).unwrap()).unwrap();
        let f = PiecewiseConstant::new(fb, fv, Rational::new()).unwrap();
        let res = solve(&w, &f).unwrap();
        assert!(res.flux_constant && res.boundary_exact);
        assert_eq!(res.u.value_at(&Rational::from(1)), 0);
        // ∫ w u'^2 = ∫ w F^2 - (∫ F)^2 / ∫ w^-1, evaluated independently.
        let (mut a, mut b, mut int_f, mut int_inv) = (Rational::new(), Rational::new(), Rational::new(), Rational::new());
        for (v, len) in czweights::geometry::value_distribution(&[&w, &res.du, &f], &unit) {
            a += Rational::from(&len * &v[0]) * Rational::from(&v[1] * &v[1]);
            b += Rational::from(&len * &v[0]) * Rational::from(&v[2] * &v[2]);
            int_f += Rational::from(&len * &v[2]);
            int_inv += Rational::from(&len / &v[0]);
        }
        assert_eq!(a, b - int_f.clone() * int_f / int_inv);
        let r = cz_check(&res, &w, &f, &Rational::from(2), &Rational::from(1), SRange::Theorem, Precision::default()).unwrap();
        assert!(r.to_f64() <= ENERGY_CAP);
    }
}

#[test]
fn counterexample_weight_fed_its_own_forcing() {
    let c = build(&BuildParams::new(10)).unwrap();
    let f = make_forcing(&c);
    let res = solve(c.w(), &f).unwrap();
    // The construction already solves the problem with flux -1.
    assert_eq!(res.flux, -1);
    assert_eq!(res.u, *c.u());
    let ps: Vec<Rational> = [2, 3, 4].iter().map(|&p| Rational::from(p)).collect();
    let (rows, knee) = ratio_curve(&res, c.w(), &f, &ps, |_| Rational::from(1), Precision::default()).unwrap();
    assert!(rows[0].1.to_f64() <= ENERGY_CAP);
    assert!(rows[1].1.to_f64() > rows[0].1.to_f64());
    assert!(knee.is_some());
}
