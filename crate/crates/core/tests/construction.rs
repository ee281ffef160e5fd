use czweights::construct::{build, BuildParams, Region, TeethPolicy};
use czweights::scalar::pow2;
use rug::Rational;

#[test]
fn audited_measures_match_an_independent_recount() {
    for n in [2u32, 4, 8] {
        let mut p = BuildParams::new(n);
        p.epsilon = BuildParams::default_epsilon(n, 3.0);
        let c = build(&p).unwrap();
        assert!(c.diagnostics().all_passed(), "{}", c.diagnostics().failure_summary());
        let t = c.table();
        let lab = c.labeling();
        // Recount from the weight alone: w = 2^-k marks G_k, w = 1 marks B.
        let w = c.w();
        for k in 1..=n {
            let level = w.level_measure(&w.window(), &pow2(-(k as i64)));
            assert!(level <= *t.mu(k));
            assert!(level >= Rational::from(t.mu(k) * (Rational::from(1) - &p.epsilon)));
        }
        assert_eq!(w.level_measure(&w.window(), &Rational::from(1)), *t.beta());
        assert!(c.u().sup_norm() <= p.delta);
        // u' from the nodes agrees with the label slope on every piece.
        let du = c.u().derivative();
        for i in (0..lab.pieces()).step_by(97) {
            let (iv, r) = lab.piece(i);
            assert_eq!(*du.value_at(&iv.midpoint()), r.slope(t));
        }
        assert_eq!(lab.measure(Region::B), *t.beta());
    }
}

#[test]
fn depth_zero_and_oversized_epsilon_are_rejected() {
    assert!(build(&BuildParams::new(0)).is_err());
    let mut p = BuildParams::new(2);
    p.epsilon = Rational::from(1);
    assert!(build(&p).is_err());
}

#[test]
fn single_tooth_two_children_has_one_first_level_tooth() {
    let mut p = BuildParams::new(6);
    p.delta = Rational::from(1);
    p.teeth = TeethPolicy::Budget { children: 2 };
    let c = build(&p).unwrap();
    assert_eq!(c.teeth()[0], 1);
    assert!(c.diagnostics().all_passed());
}

#[test]
fn bundle_serializes_rationals_as_pairs() {
    let c = build(&BuildParams::new(2)).unwrap();
    let v: serde_json::Value = serde_json::to_value(&c).unwrap();
    let text = v.to_string();
    assert!(text.contains("[11,16]") || text.contains("[11, 16]"), "beta_2 should appear as a pair");
}
