//! Exact solution of `(w u')' = (w F)'` on `(0, 1)` with `u(0) = u(1) = 0`,
//! and the interior gradient ratio it is compared with.
//!
//! Integrating once gives `w u' = w F + c`, so `u' = F + c/w` and the boundary
//! condition fixes `c = -∫F / ∫w^{-1}`.

use std::collections::BTreeMap;

use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::certify::{weighted_term, Ratio};
use crate::error::{Error, Result};
use crate::geometry::{joint_pieces, value_distribution, Interval, PiecewiseConstant, PiecewiseLinear, Weight};
use crate::json;
use crate::scalar::{power, Precision, Scalar};

/// Ceiling for the `(p, s) = (2, 1)` ratio: testing the equation with `u`
/// gives `∫ w u'^2 = ∫ w F^2 - (∫F)^2 / ∫ w^{-1} <= ∫ w F^2` on `(0, 1)`,
/// so the interior ratio can never exceed 1, whatever the weight.
pub const ENERGY_CAP: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub u: PiecewiseLinear,
    pub du: PiecewiseConstant,
    /// The constant value of `w u' - w F`.
    #[serde(with = "json::rational")]
    pub flux: Rational,
    pub flux_constant: bool,
    pub boundary_exact: bool,
    /// Keyed by `"p=..,s=.."`.
    pub cz_ratios: BTreeMap<String, Ratio>,
    #[serde(with = "json::float_opt")]
    pub a2_estimate: Option<Float>,
}

fn unit() -> Interval {
    Interval::new(Rational::new(), Rational::from(1)).expect("unit interval")
}

pub fn solve(w: &Weight, f: &PiecewiseConstant) -> Result<SolveResult> {
    let (cuts, values) = joint_pieces(&[w, f], &unit());
    let lens: Vec<Rational> = cuts.windows(2).map(|p| Rational::from(&p[1] - &p[0])).collect();
    let int_f: Rational = lens.iter().zip(&values).map(|(l, v)| Rational::from(l * &v[1])).sum();
    let int_inv: Rational = lens
        .iter()
        .zip(&values)
        .map(|(l, v)| Rational::from(l / &v[0]))
        .sum();
    let c = -(int_f / int_inv);
    let slopes: Vec<Rational> = values
        .iter()
        .map(|v| Rational::from(&v[1] + Rational::from(&c / &v[0])))
        .collect();
    let flux_constant = values
        .iter()
        .zip(&slopes)
        .all(|(v, d)| Rational::from(&v[0] * d) - Rational::from(&v[0] * &v[1]) == c);
    let du = PiecewiseConstant::new(cuts.clone(), slopes.clone(), Rational::new())?;
    let u = PiecewiseLinear::from_slopes(cuts, &slopes, Rational::new(), Rational::new())?;
    let boundary_exact = u.extends_continuously();
    Ok(SolveResult {
        u,
        du,
        flux: c,
        flux_constant,
        boundary_exact,
        cz_ratios: BTreeMap::new(),
        a2_estimate: None,
    })
}

/// Which `s` values `cz_check` accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SRange {
    /// `s ∈ {1, p/2}`.
    Theorem,
    /// Any `s >= 1`; results are reported, not asserted.
    Override,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CzReport {
    #[serde(with = "json::rational")]
    pub p: Rational,
    #[serde(with = "json::rational")]
    pub s: Rational,
    /// `∫_{(1/4, 3/4)} w^s |u'|^p`
    pub lhs: Scalar,
    /// `∫_0^1 w^s |F|^p`
    pub rhs_f: Scalar,
    /// `‖u‖_∞^p ∫_0^1 w^s`
    pub rhs_u: Scalar,
    pub ratio: Ratio,
}

/// `∫_{(1/4, 3/4)} w^s |u'|^p / (∫_0^1 w^s |F|^p + ‖u‖_∞^p ∫_0^1 w^s)`.
pub fn cz_check(
    res: &SolveResult,
    w: &PiecewiseConstant,
    f: &PiecewiseConstant,
    p: &Rational,
    s: &Rational,
    range: SRange,
    prec: Precision,
) -> Result<Ratio> {
    cz_terms(res, w, f, p, s, range, prec).map(|r| r.ratio)
}

/// Both sides of the interior estimate, as in `cz_check`.
pub fn cz_terms(
    res: &SolveResult,
    w: &PiecewiseConstant,
    f: &PiecewiseConstant,
    p: &Rational,
    s: &Rational,
    range: SRange,
    prec: Precision,
) -> Result<CzReport> {
    if *p < 2 {
        return Err(Error::InvalidParameter(format!("p must be at least 2, got {p}")));
    }
    let half_p = Rational::from(p / 2u32);
    let allowed = match range {
        SRange::Theorem => *s == 1 || *s == half_p,
        SRange::Override => *s >= 1,
    };
    if !allowed {
        return Err(Error::InvalidParameter(format!(
            "s = {s} is outside {{1, p/2}}; use the override to explore it"
        )));
    }
    let (ps, ss) = (Scalar::Exact(p.clone()), Scalar::Exact(s.clone()));
    let inner = Interval::from_ratios((1, 4), (3, 4))?;
    let lhs_terms: Vec<Scalar> = value_distribution(&[w, &res.du], &inner)
        .iter()
        .map(|(v, len)| weighted_term(len, &v[0], &v[1], &ps, &ss, prec))
        .collect();
    let lhs = Scalar::sum(lhs_terms.iter(), prec);
    let one = Rational::from(1);
    let mut rhs_f = Vec::new();
    let mut w_s = Vec::new();
    for (v, len) in value_distribution(&[w, f], &unit()) {
        rhs_f.push(weighted_term(&len, &v[0], &v[1], &ps, &ss, prec));
        w_s.push(weighted_term(&len, &v[0], &one, &ps, &ss, prec));
    }
    let rhs_u = power(&res.u.sup_norm(), &ps, prec).mul(&Scalar::sum(w_s.iter(), prec), prec);
    let rhs_f = Scalar::sum(rhs_f.iter(), prec);
    let ratio = Ratio::new(&lhs, &rhs_f.add(&rhs_u, prec), prec);
    Ok(CzReport {
        p: p.clone(),
        s: s.clone(),
        lhs,
        rhs_f,
        rhs_u,
        ratio,
    })
}

pub fn ratio_key(p: &Rational, s: &Rational) -> String {
    format!("p={p},s={s}")
}

/// Ratios over a list of exponents with `s` fixed by `s_of_p`, plus the index
/// of the steepest rise in `log ratio` between neighbours (the observed knee).
pub fn ratio_curve(
    res: &SolveResult,
    w: &PiecewiseConstant,
    f: &PiecewiseConstant,
    ps: &[Rational],
    s_of_p: impl Fn(&Rational) -> Rational,
    prec: Precision,
) -> Result<(Vec<(Rational, Ratio)>, Option<usize>)> {
    let rows = ps
        .iter()
        .map(|p| Ok((p.clone(), cz_check(res, w, f, p, &s_of_p(p), SRange::Override, prec)?)))
        .collect::<Result<Vec<_>>>()?;
    let logs: Vec<f64> = rows.iter().map(|(_, r)| r.to_f64().ln()).collect();
    let knee = logs
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0].is_finite() && w[1].is_finite())
        .max_by(|a, b| (a.1[1] - a.1[0]).total_cmp(&(b.1[1] - b.1[0])))
        .map(|(i, _)| i + 1);
    Ok((rows, knee))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    fn halves(a: Rational, b: Rational) -> PiecewiseConstant {
        PiecewiseConstant::new(vec![q(0, 1), q(1, 2), q(1, 1)], vec![a, b], q(1, 1)).unwrap()
    }

    #[test]
    fn constant_forcing_gives_zero() {
        let w = Weight::new(PiecewiseConstant::new(vec![q(0, 1), q(1, 1)], vec![q(1, 1)], q(1, 1)).unwrap()).unwrap();
        let f = PiecewiseConstant::new(vec![q(0, 1), q(1, 1)], vec![q(5, 3)], q(0, 1)).unwrap();
        let res = solve(&w, &f).unwrap();
        assert_eq!(res.flux, q(-5, 3));
        assert_eq!(res.u.sup_norm(), 0);
        let one = PiecewiseConstant::new(vec![q(0, 1), q(1, 1)], vec![q(1, 1)], q(0, 1)).unwrap();
        let res = solve(&w, &one).unwrap();
        let r = cz_check(&res, &w, &one, &q(2, 1), &q(1, 1), SRange::Theorem, Precision::default()).unwrap();
        assert_eq!(r.to_f64(), 0.0);
    }

    #[test]
    fn two_piece_solution() {
        let w = Weight::new(halves(q(1, 1), q(1, 2))).unwrap();
        let f = halves(q(1, 1), q(0, 1));
        let res = solve(&w, &f).unwrap();
        assert_eq!(res.flux, q(-1, 3));
        assert_eq!(res.du.values(), &[q(2, 3), q(-2, 3)]);
        assert_eq!(res.u.value_at(&q(1, 2)), q(1, 3));
        assert!(res.flux_constant && res.boundary_exact);
        let r = cz_check(&res, &w, &f, &q(2, 1), &q(1, 1), SRange::Theorem, Precision::default()).unwrap();
        assert!(r.to_f64() > 0.0 && r.to_f64() < 10.0);
    }

    #[test]
    fn zero_forcing() {
        let w = Weight::new(halves(q(3, 1), q(1, 7))).unwrap();
        let f = halves(q(0, 1), q(0, 1));
        let res = solve(&w, &f).unwrap();
        assert_eq!(res.flux, 0);
        assert_eq!(res.u.sup_norm(), 0);
    }

    #[test]
    fn s_outside_theorem_needs_override() {
        let w = Weight::new(halves(q(1, 1), q(1, 2))).unwrap();
        let f = halves(q(1, 1), q(0, 1));
        let res = solve(&w, &f).unwrap();
        let p = q(3, 1);
        assert!(cz_check(&res, &w, &f, &p, &q(5, 4), SRange::Theorem, Precision::default()).is_err());
        assert!(cz_check(&res, &w, &f, &p, &q(3, 2), SRange::Theorem, Precision::default()).is_ok());
        assert!(cz_check(&res, &w, &f, &p, &q(5, 4), SRange::Override, Precision::default()).is_ok());
    }
}
