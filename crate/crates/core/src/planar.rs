//! Tensor extension `W(x, y) = w(x)`, `U(x, y) = u(x)`, `F₂ = (F(x), 0)` on the
//! unit square.
//!
//! Square averages of `W` are interval averages of `w`, so the sampled A_r
//! product over squares can be cross-checked against the line evaluator, and
//! the weak form reduces to one-dimensional integrals that are exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::certify::forcing_for;
use crate::error::{Error, Result};
use crate::geometry::{joint_pieces, Interval, PiecewiseConstant, PiecewiseLinear, PrefixTable, Weight};
use crate::json;
use crate::muckenhoupt::phi_exact;
use crate::scalar::{pow2, rational_from_f64, Precision, Scalar};

#[derive(Clone, Debug)]
pub struct PlanarExtension {
    w: Weight,
    u: PiecewiseLinear,
    f: PiecewiseConstant,
}

impl PlanarExtension {
    /// Extend `(w, u)`; the forcing is `F = u' + 1/w`.
    pub fn new(w: Weight, u: PiecewiseLinear) -> Result<Self> {
        let f = forcing_for(&u, &w)?;
        Ok(PlanarExtension { w, u, f })
    }

    /// Extend with an explicit forcing.
    pub fn with_forcing(w: Weight, u: PiecewiseLinear, f: PiecewiseConstant) -> Self {
        PlanarExtension { w, u, f }
    }

    pub fn w(&self) -> &Weight {
        &self.w
    }

    /// `(W, U_x, U_y, F_1, F_2)` at `(x, y)`.
    pub fn fields_at(&self, x: &Rational) -> [Rational; 5] {
        [
            self.w.value_at(x).clone(),
            self.u.derivative().value_at(x).clone(),
            Rational::new(),
            self.f.value_at(x).clone(),
            Rational::new(),
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledAr {
    pub r: f64,
    #[serde(with = "json::float")]
    pub sup: Float,
    /// x-projection of the best square.
    pub argmax: Interval,
    pub squares: usize,
    /// Largest `|square value - interval value|` over all samples.
    #[serde(with = "json::float")]
    pub reduction_gap: Float,
}

struct Tables {
    w: PrefixTable,
    s: PrefixTable,
    rm1: Float,
    prec: Precision,
}

impl Tables {
    /// Square average product, from double integrals over `q × [0, |q|]`.
    fn square(&self, q: &Interval) -> Float {
        let bits = self.prec.bits();
        let side = q.len();
        let area = Float::with_val(bits, Rational::from(&side * &side));
        let side_f = Float::with_val(bits, &side);
        let aw = self.w.integral(q).to_float(self.prec) * &side_f / &area;
        let as_ = self.s.integral(q).to_float(self.prec) * &side_f / &area;
        aw * as_.pow(&self.rm1)
    }
}

/// Sampled A_r product over axis-parallel squares in `[-1, 2]²`: all squares
/// with corners on a `grid × grid` lattice, plus dyadic sides down to the
/// finest piece placed at `grid` offsets around the breakpoints next to the
/// smallest weight values. Squares are identified by their x-projection since
/// `W` does not depend on `y`.
pub fn ar2_sampled(ext: &PlanarExtension, r: f64, grid: usize) -> Result<SampledAr> {
    if !(r.is_finite() && r > 1.0) {
        return Err(Error::InvalidParameter(format!("A_r needs r > 1, got {r}")));
    }
    if grid < 8 {
        return Err(Error::InvalidParameter(format!("grid must be at least 8, got {grid}")));
    }
    let prec = Precision::default();
    let r_q = rational_from_f64(r)?;
    let rm1 = Rational::from(&r_q - 1u32);
    let gamma = Scalar::exact(-rm1.clone().recip());
    let tables = Tables {
        w: ext.w.prefix_table(&Scalar::exact(1), prec),
        s: ext.w.prefix_table(&gamma, prec),
        rm1: Float::with_val(prec.bits(), &rm1),
        prec,
    };

    let lo = Rational::from(-1);
    let step = Rational::from((3, grid as u64));
    let mut xs: Vec<Interval> = Vec::new();
    for i in 0..grid {
        for j in i + 1..=grid {
            let a = Rational::from(&lo + Rational::from(&step * i as u64));
            let b = Rational::from(&lo + Rational::from(&step * j as u64));
            xs.push(Interval::new(a, b)?);
        }
    }
    let breaks = ext.w.breaks();
    let finest = breaks
        .windows(2)
        .map(|p| Rational::from(&p[1] - &p[0]))
        .min()
        .unwrap_or_else(|| Rational::from(1));
    let mut depth = 0i64;
    while pow2(-depth) > finest && depth < 200 {
        depth += 1;
    }
    let min_w = ext.w.values().iter().min().cloned().unwrap_or_else(|| Rational::from(1));
    let mut anchors: Vec<Rational> = (0..ext.w.pieces())
        .filter(|&i| ext.w.values()[i] == min_w)
        .flat_map(|i| [breaks[i].clone(), breaks[i + 1].clone()])
        .take(grid)
        .collect();
    anchors.extend(breaks.iter().take(grid).cloned());
    anchors.sort();
    anchors.dedup();
    for d in 0..=depth + 2 {
        let side = pow2(-d);
        for anchor in &anchors {
            for t in 0..grid {
                let a = Rational::from(anchor - Rational::from(&side * (t as u64)) / grid as u64);
                let b = Rational::from(&a + &side);
                if a >= -1 && b <= 2 {
                    xs.push(Interval::new(a, b)?);
                }
            }
        }
    }

    let values: Vec<(Float, Float)> = xs
        .par_iter()
        .map(|q| {
            let sq = tables.square(q);
            let line = phi_exact(&ext.w, q, &r_q, prec);
            (sq, line)
        })
        .collect();
    let mut best = 0usize;
    let mut gap = Float::with_val(prec.bits(), 0);
    for (i, (sq, line)) in values.iter().enumerate() {
        if *sq > values[best].0 {
            best = i;
        }
        let d = Float::with_val(prec.bits(), sq - line).abs();
        if d > gap {
            gap = d;
        }
    }
    Ok(SampledAr {
        r,
        sup: values[best].0.clone(),
        argmax: xs[best].clone(),
        squares: xs.len(),
        reduction_gap: gap,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakFormTest {
    pub x: Interval,
    pub y: Interval,
    #[serde(with = "json::rational")]
    pub residual: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakFormReport {
    pub tests: Vec<WeakFormTest>,
    #[serde(with = "json::rational")]
    pub max_residual: Rational,
    /// Distinct values of `W U_x - W F_1` on the square.
    #[serde(with = "json::rational_vec")]
    pub flux_values: Vec<Rational>,
    pub passed: bool,
}

fn random_support(rng: &mut ChaCha8Rng) -> Interval {
    let depth: i64 = rng.gen_range(1..=20);
    let odd: u64 = 2 * rng.gen_range(0..(1u64 << (depth - 1))) + 1;
    let center = Rational::from(odd) * pow2(-depth);
    let h = pow2(-rng.gen_range(depth + 1..=depth + 10));
    Interval::new(Rational::from(&center - &h), Rational::from(&center + &h)).unwrap()
}

/// `∫∫ W ∇U·∇φ - ∫∫ W F₂·∇φ` for tensor hats `φ = φ_x(x) φ_y(y)` supported
/// in the open square. Only `∂_x φ` meets the nonzero components, so each
/// test is `∫ φ_y · ∫ (w u' - w F) φ_x'`, both exact.
pub fn weak_form_residual(ext: &PlanarExtension, tests: usize, seed: u64) -> WeakFormReport {
    let unit = Interval::new(Rational::new(), Rational::from(1)).unwrap();
    let du = ext.u.derivative();
    let (cuts, values) = joint_pieces(&[&ext.w, &du, &ext.f], &unit);
    let flux: Vec<Rational> = values
        .iter()
        .map(|v| Rational::from(&v[0] * &v[1]) - Rational::from(&v[0] * &v[2]))
        .collect();
    let mut flux_values = flux.clone();
    flux_values.sort();
    flux_values.dedup();
    let g = PiecewiseConstant::new(cuts, flux, Rational::new()).expect("refinement of valid pieces");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tests: Vec<WeakFormTest> = (0..tests)
        .map(|_| {
            let x = random_support(&mut rng);
            let y = random_support(&mut rng);
            let h = x.len() / 2u32;
            let mid = x.midpoint();
            let left = Interval::new(x.a().clone(), mid.clone()).unwrap();
            let right = Interval::new(mid, x.b().clone()).unwrap();
            let x_part = (g.integral(&left) - g.integral(&right)) / &h;
            // ∫ of a unit hat over its support is half its width.
            let y_part = y.len() / 2u32;
            WeakFormTest {
                residual: x_part * y_part,
                x,
                y,
            }
        })
        .collect();
    let max_residual = tests.iter().map(|t| t.residual.clone().abs()).max().unwrap_or_default();
    let passed = max_residual == 0 && flux_values.len() == 1;
    WeakFormReport {
        tests,
        max_residual,
        flux_values,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::{build, BuildParams};

    fn q(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    #[test]
    fn constant_weight_square_is_one() {
        let w = Weight::new(PiecewiseConstant::new(vec![q(0, 1), q(1, 1)], vec![q(1, 1)], q(1, 1)).unwrap()).unwrap();
        let u = PiecewiseLinear::zero(&Interval::from_ratios((0, 1), (1, 1)).unwrap());
        let ext = PlanarExtension::new(w, u).unwrap();
        let rep = ar2_sampled(&ext, 3.0, 8).unwrap();
        assert!((rep.sup.to_f64() - 1.0).abs() < 1e-30);
    }

    #[test]
    fn weak_form_vanishes_for_construction() {
        let c = build(&BuildParams::new(3)).unwrap();
        let ext = PlanarExtension::new(c.w().clone(), c.u().clone()).unwrap();
        let rep = weak_form_residual(&ext, 40, 9);
        assert!(rep.passed, "{:?}", rep.max_residual);
        assert_eq!(rep.flux_values, vec![Rational::from(-1)]);
    }
}
