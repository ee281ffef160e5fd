use czweights::construct::{build, BuildParams};
use czweights::geometry::{Interval, PiecewiseConstant, PiecewiseLinear, Weight};
use czweights::muckenhoupt::{ar_characteristic, SearchConfig};
use czweights::planar::{ar2_sampled, weak_form_residual, PlanarExtension};
use rug::Rational;

fn q(n: i64, d: i64) -> Rational {
    Rational::from((n, d))
}

#[test]
fn two_piece_tensor_on_the_unit_square() {
    let w = Weight::new(PiecewiseConstant::new(vec![q(0, 1), q(1, 2), q(1, 1)], vec![q(1, 1), q(1, 2)], q(1, 1)).unwrap()).unwrap();
    let u = PiecewiseLinear::zero(&Interval::from_ratios((0, 1), (1, 1)).unwrap());
    let ext = PlanarExtension::new(w, u).unwrap();
    let rep = ar2_sampled(&ext, 3.0, 12).unwrap();
    // The unit square is one of the lattice squares; its value is
    // (3/4) ((1 + sqrt 2) / 2)^2.
    let unit_value = 0.75 * ((1.0 + 2f64.sqrt()) / 2.0).powi(2);
    assert!((unit_value - 1.0928).abs() < 1e-4);
    assert!(rep.sup.to_f64() >= unit_value - 1e-12);
    assert!(rep.reduction_gap.to_f64() < 1e-25);
}

#[test]
fn sampled_sup_tracks_the_line_estimate() {
    let c = build(&BuildParams::new(8)).unwrap();
    let ext = PlanarExtension::new(c.w().clone(), c.u().clone()).unwrap();
    let two_d = ar2_sampled(&ext, 3.0, 8).unwrap();
    let one_d = ar_characteristic(c.w(), 3.0, &SearchConfig::default()).unwrap();
    let ratio = one_d.sup_estimate.to_f64() / two_d.sup.to_f64();
    assert!(two_d.sup.to_f64() <= one_d.sup_estimate.to_f64() * (1.0 + 1e-9));
    assert!(ratio <= 1.5, "1D {} vs sampled {}", one_d.sup_estimate, two_d.sup);
}

#[test]
fn weak_form_and_tampering() {
    let c = build(&BuildParams::new(5)).unwrap();
    let ext = PlanarExtension::new(c.w().clone(), c.u().clone()).unwrap();
    assert!(weak_form_residual(&ext, 100, 3).passed);
    let f = czweights::certify::make_forcing(&c);
    let bent = f.map_values(|v| if *v == 0 { q(1, 5) } else { v.clone() });
    let tampered = PlanarExtension::with_forcing(c.w().clone(), c.u().clone(), bent);
    let rep = weak_form_residual(&tampered, 400, 3);
    assert!(!rep.passed);
    assert!(rep.flux_values.len() > 1);
}

#[test]
fn rejects_bad_exponent_and_grid() {
    let c = build(&BuildParams::new(2)).unwrap();
    let ext = PlanarExtension::new(c.w().clone(), c.u().clone()).unwrap();
    assert!(ar2_sampled(&ext, 1.0, 8).is_err());
    assert!(ar2_sampled(&ext, 3.0, 4).is_err());
}
