use czweights::certify::{blowup_ratio, find_n, make_forcing, pde_residual, Ratio, SweepOptions};
use czweights::construct::{build, BuildParams};
use czweights::scalar::{pow2, Precision};
use rug::Rational;

fn q(n: i64, d: i64) -> Rational {
    Rational::from((n, d))
}

/// Both sides built straight from the table for exact label measures.
fn oracle(n: u32, p: u32, s: u32, sup_u: &Rational) -> Rational {
    let t = czweights::sequences::build_table(n).unwrap();
    let b = t.b().clone();
    let mut lhs = Rational::from(t.beta() * b.clone().pow(p));
    let mut int_ws = t.beta().clone();
    for k in 1..=n {
        lhs += Rational::from(t.mu(k) * pow2(((p - s) * k) as i64));
        int_ws += Rational::from(t.mu(k) * pow2(-((s * k) as i64)));
    }
    let rhs_f = Rational::from(t.beta() * (b + 1u32).pow(p));
    let rhs_u = sup_u.clone().pow(p) * int_ws;
    lhs / (rhs_f + rhs_u)
}

trait PowU {
    fn pow(self, e: u32) -> Rational;
}

impl PowU for Rational {
    fn pow(self, e: u32) -> Rational {
        (0..e).fold(Rational::from(1), |acc, _| acc * &self)
    }
}

#[test]
fn ratios_match_the_table_oracle() {
    for (n, p) in [(3u32, 2u32), (6, 2), (6, 3), (9, 4)] {
        let c = build(&BuildParams::new(n)).unwrap();
        let rep = blowup_ratio(&c, &Rational::from(p), &Rational::from(1), None, Precision::default()).unwrap();
        let expected = oracle(n, p, 1, &c.u().sup_norm()).to_f64();
        let Ratio::Finite { value } = &rep.ratio else { panic!("finite ratio expected") };
        assert!((value.to_f64() / expected - 1.0).abs() < 1e-12, "N={n} p={p}");
        assert!(rep.closed_form_rel_err.to_f64() < 1e-10);
        assert!(rep.quarantine_ok);
    }
}

#[test]
fn n2_fixture() {
    let c = build(&BuildParams::new(2)).unwrap();
    let rep = blowup_ratio(&c, &q(3, 1), &q(1, 1), None, Precision::default()).unwrap();
    assert_eq!(rep.lhs.as_rational(), Some(&(q(108, 121) + 2u32)));
    assert_eq!(rep.rhs_f.as_rational(), Some(&q(12167, 1936)));
}

#[test]
fn residual_of_a_deeper_construction() {
    let c = build(&BuildParams::new(7)).unwrap();
    let rep = pde_residual(c.u(), c.w(), &make_forcing(&c), 100, 42);
    assert!(rep.passed);
    assert!(rep.tests.iter().all(|t| t.residual == 0));
}

#[test]
fn short_sweep_shapes() {
    let opts = SweepOptions::default();
    let sw = find_n(&q(3, 1), &q(1, 1), &q(1, 1), 8, &opts).unwrap();
    assert_eq!(sw.rows.len(), 8);
    assert_eq!(sw.control.len(), 8);
    let expected = (1..=8u32).find(|&n| {
        let c = build(&BuildParams::new(n)).unwrap();
        oracle(n, 3, 1, &c.u().sup_norm()) > 1
    });
    assert_eq!(sw.first, expected);
    assert!(sw.monotone_from_4);
    // s >= p - 1 does not grow; the sweep reports exhaustion rather than failing.
    let flat = find_n(&q(3, 1), &q(5, 2), &q(10, 1), 6, &opts).unwrap();
    assert_eq!(flat.first, None);
}
