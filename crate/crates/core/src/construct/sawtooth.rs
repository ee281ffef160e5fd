//! Sawtooth replacement of an affine piece by two alternating slopes.

use rug::Rational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Interval, PiecewiseLinear};

/// Order of the two segments inside one tooth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToothShape {
    /// `[s1][s2]`.
    Leading,
    /// `[s2/2][s1][s2/2]`: the first slope sits in the middle of every tooth,
    /// so whatever refines it later stays away from the tooth ends.
    #[default]
    Centered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    First,
    Second,
}

/// Breakpoints and slopes of a sawtooth on one interval.
#[derive(Clone, Debug, PartialEq)]
pub struct SawtoothFragment {
    pub breaks: Vec<Rational>,
    pub slopes: Vec<Rational>,
    pub parts: Vec<Part>,
}

impl SawtoothFragment {
    /// The fragment as a function starting from `start_value` at the left end.
    pub fn to_linear(&self, start_value: Rational) -> PiecewiseLinear {
        PiecewiseLinear::from_slopes(self.breaks.clone(), &self.slopes, start_value, Rational::new())
            .expect("fragment breakpoints are increasing")
    }

    pub fn measure(&self, part: Part) -> Rational {
        self.breaks
            .windows(2)
            .zip(&self.parts)
            .filter(|(_, p)| **p == part)
            .map(|(w, _)| Rational::from(&w[1] - &w[0]))
            .sum()
    }

    /// `max |fragment - parent|` over the interval, attained at a node.
    pub fn max_deviation(&self, parent_slope: &Rational) -> Rational {
        let mut dev = Rational::new();
        let mut worst = Rational::new();
        for (w, s) in self.breaks.windows(2).zip(&self.slopes) {
            dev += Rational::from(&w[1] - &w[0]) * Rational::from(s - parent_slope);
            let a = Rational::from(dev.abs_ref());
            if a > worst {
                worst = a;
            }
        }
        worst
    }
}

/// Replace slope `parent_slope` on `w` by `m` teeth mixing `s1` (fraction
/// `f1`) and `s2` (fraction `f2`). Requires `f1 + f2 = 1` and
/// `f1 s1 + f2 s2 = parent_slope` exactly, so the ends of `w` are preserved.
#[allow(clippy::too_many_arguments)]
pub fn sawtooth_replace(
    w: &Interval,
    parent_slope: &Rational,
    s1: &Rational,
    f1: &Rational,
    s2: &Rational,
    f2: &Rational,
    m: u64,
    shape: ToothShape,
) -> Result<SawtoothFragment> {
    if m == 0 {
        return Err(Error::SawtoothMismatch("need at least one tooth".into()));
    }
    if *f1 <= 0 || *f2 <= 0 {
        return Err(Error::SawtoothMismatch(format!("fractions {f1}, {f2} must be positive")));
    }
    if Rational::from(f1 + f2) != 1 {
        return Err(Error::SawtoothMismatch(format!("fractions {f1} + {f2} != 1")));
    }
    let mean = Rational::from(f1 * s1) + Rational::from(f2 * s2);
    if mean != *parent_slope {
        return Err(Error::SawtoothMismatch(format!(
            "mean slope {mean} != parent slope {parent_slope}"
        )));
    }
    let tooth = w.len() / m;
    let l1 = Rational::from(&tooth * f1);
    let l2 = Rational::from(&tooth * f2);
    let half2 = Rational::from(&l2 / 2);
    let pattern: Vec<(&Rational, &Rational, Part)> = match shape {
        ToothShape::Leading => vec![(&l1, s1, Part::First), (&l2, s2, Part::Second)],
        ToothShape::Centered => vec![
            (&half2, s2, Part::Second),
            (&l1, s1, Part::First),
            (&half2, s2, Part::Second),
        ],
    };
    let per = pattern.len();
    let mut breaks = Vec::with_capacity(per * m as usize + 1);
    let mut slopes = Vec::with_capacity(per * m as usize);
    let mut parts = Vec::with_capacity(per * m as usize);
    breaks.push(w.a().clone());
    for t in 0..m {
        let base = Rational::from(w.a() + Rational::from(&tooth * t));
        let mut x = base;
        for (i, (len, s, part)) in pattern.iter().enumerate() {
            // Close every tooth on its exact grid point so no drift accumulates.
            x = if i + 1 == per {
                Rational::from(w.a() + Rational::from(&tooth * (t + 1)))
            } else {
                x + *len
            };
            breaks.push(x.clone());
            slopes.push((*s).clone());
            parts.push(*part);
        }
    }
    Ok(SawtoothFragment {
        breaks,
        slopes,
        parts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    fn unit() -> Interval {
        Interval::from_ratios((0, 1), (1, 1)).unwrap()
    }

    #[test]
    fn single_leading_tooth() {
        let f = sawtooth_replace(&unit(), &q(0, 1), &q(-2, 1), &q(1, 4), &q(2, 3), &q(3, 4), 1, ToothShape::Leading)
            .unwrap();
        let u = f.to_linear(q(0, 1));
        assert_eq!(u.breaks(), &[q(0, 1), q(1, 4), q(1, 1)]);
        assert_eq!(u.nodes(), &[q(0, 1), q(-1, 2), q(0, 1)]);
    }

    #[test]
    fn excursion_scales_with_teeth() {
        let f = sawtooth_replace(&unit(), &q(0, 1), &q(-2, 1), &q(1, 4), &q(2, 3), &q(3, 4), 4, ToothShape::Leading)
            .unwrap();
        assert_eq!(f.max_deviation(&q(0, 1)), q(1, 8));
        assert_eq!(f.to_linear(q(0, 1)).sup_norm(), q(1, 8));
        assert_eq!(f.measure(Part::First), q(1, 4));
        assert_eq!(f.measure(Part::Second), q(3, 4));
    }

    #[test]
    fn centered_tooth_halves_the_excursion() {
        let f = sawtooth_replace(&unit(), &q(0, 1), &q(-2, 1), &q(1, 4), &q(2, 3), &q(3, 4), 4, ToothShape::Centered)
            .unwrap();
        assert_eq!(f.max_deviation(&q(0, 1)), q(1, 16));
        assert_eq!(*f.to_linear(q(0, 1)).nodes().last().unwrap(), 0);
    }

    #[test]
    fn rejects_inconsistent_slopes() {
        let r = sawtooth_replace(&unit(), &q(0, 1), &q(-2, 1), &q(1, 4), &q(1, 1), &q(3, 4), 1, ToothShape::Leading);
        assert!(matches!(r, Err(Error::SawtoothMismatch(_))));
        let r = sawtooth_replace(&unit(), &q(0, 1), &q(-2, 1), &q(1, 2), &q(2, 3), &q(3, 4), 1, ToothShape::Leading);
        assert!(r.is_err());
        let r = sawtooth_replace(&unit(), &q(0, 1), &q(-2, 1), &q(1, 4), &q(2, 3), &q(3, 4), 0, ToothShape::Leading);
        assert!(r.is_err());
    }

    #[test]
    fn preserves_parent_values_at_ends() {
        let w = Interval::from_ratios((1, 3), (5, 6)).unwrap();
        let f = sawtooth_replace(&w, &q(-12, 5), &q(-4, 1), &q(1, 5), &q(-2, 1), &q(4, 5), 3, ToothShape::Centered)
            .unwrap();
        let u = f.to_linear(q(7, 1));
        let expect = q(7, 1) + w.len() * q(-12, 5);
        assert_eq!(*u.nodes().last().unwrap(), expect);
    }
}
