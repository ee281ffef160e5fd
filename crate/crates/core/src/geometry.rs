//! Exact piecewise-constant and piecewise-linear functions on the line.
//!
//! A function lives on a window `[x_0, x_M]` cut by rational breakpoints and
//! extends by a constant outside it. Representations are canonical: adjacent
//! pieces with equal value (or equal slope) are merged on construction.

use std::collections::{BTreeMap, HashMap};
use std::ops::Deref;

use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::scalar::{power, Precision, Scalar};

/// Open interval `(a, b)` with `a < b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "json::rational")]
    a: Rational,
    #[serde(with = "json::rational")]
    b: Rational,
}

impl Interval {
    pub fn new(a: Rational, b: Rational) -> Result<Self> {
        if a >= b {
            return Err(Error::EmptyInterval {
                a: a.to_string(),
                b: b.to_string(),
            });
        }
        Ok(Interval { a, b })
    }

    /// Convenience for literals: `Interval::from_ratios((0, 1), (1, 2))`.
    pub fn from_ratios(a: (i64, i64), b: (i64, i64)) -> Result<Self> {
        Interval::new(Rational::from(a), Rational::from(b))
    }

    pub fn a(&self) -> &Rational {
        &self.a
    }

    pub fn b(&self) -> &Rational {
        &self.b
    }

    pub fn len(&self) -> Rational {
        Rational::from(&self.b - &self.a)
    }

    pub fn midpoint(&self) -> Rational {
        Rational::from(&self.a + &self.b) / 2
    }

    /// Open intervals share a point.
    pub fn intersects(&self, other: &Interval) -> bool {
        self.a < other.b && other.a < self.b
    }

    pub fn intersection(&self, other: &Interval) -> Option<Interval> {
        let a = (&self.a).max(&other.a).clone();
        let b = (&self.b).min(&other.b).clone();
        Interval::new(a, b).ok()
    }

    /// `other` lies inside the closure of `self`.
    pub fn contains(&self, other: &Interval) -> bool {
        self.a <= other.a && other.b <= self.b
    }

    pub fn contains_point(&self, x: &Rational) -> bool {
        &self.a < x && x < &self.b
    }

    /// Concentric interval with `factor` times the length.
    pub fn dilate(&self, factor: &Rational) -> Interval {
        let c = self.midpoint();
        let half = self.len() * factor / 2;
        Interval {
            a: Rational::from(&c - &half),
            b: c + half,
        }
    }
}

fn check_breaks(breaks: &[Rational]) -> Result<()> {
    if breaks.len() < 2 || breaks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedBreakpoints);
    }
    Ok(())
}

/// Index of the piece containing `x` (pieces are `[x_i, x_{i+1})`), or `None`
/// outside the window.
fn locate(breaks: &[Rational], x: &Rational) -> Option<usize> {
    if x < &breaks[0] || x >= breaks.last().unwrap() {
        return None;
    }
    Some(breaks.partition_point(|b| b <= x) - 1)
}

/// Sorted union of two breakpoint lists.
pub fn common_refinement(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let mut out: Vec<Rational> = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x < y => {
                i += 1;
                x
            }
            (Some(x), Some(y)) if y < x => {
                j += 1;
                y
            }
            (Some(x), Some(_)) => {
                i += 1;
                j += 1;
                x
            }
            (Some(x), None) => {
                i += 1;
                x
            }
            (None, Some(y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        if out.last() != Some(next) {
            out.push(next.clone());
        }
    }
    out
}

/// Step function with rational values and a constant exterior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StepRepr", into = "StepRepr")]
pub struct PiecewiseConstant {
    breaks: Vec<Rational>,
    values: Vec<Rational>,
    exterior: Rational,
}

#[derive(Serialize, Deserialize)]
struct StepRepr {
    schema_version: u32,
    #[serde(with = "json::rational_vec")]
    breaks: Vec<Rational>,
    #[serde(with = "json::rational_vec")]
    values: Vec<Rational>,
    #[serde(with = "json::rational")]
    exterior: Rational,
}

impl TryFrom<StepRepr> for PiecewiseConstant {
    type Error = Error;
    fn try_from(r: StepRepr) -> Result<Self> {
        if r.schema_version != json::SCHEMA_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported schema version {}",
                r.schema_version
            )));
        }
        PiecewiseConstant::new(r.breaks, r.values, r.exterior)
    }
}

impl From<PiecewiseConstant> for StepRepr {
    fn from(f: PiecewiseConstant) -> Self {
        StepRepr {
            schema_version: json::SCHEMA_VERSION,
            breaks: f.breaks,
            values: f.values,
            exterior: f.exterior,
        }
    }
}

impl PiecewiseConstant {
    pub fn new(breaks: Vec<Rational>, values: Vec<Rational>, exterior: Rational) -> Result<Self> {
        check_breaks(&breaks)?;
        if values.len() + 1 != breaks.len() {
            return Err(Error::ShapeMismatch {
                breaks: breaks.len(),
                values: values.len(),
            });
        }
        let mut f = PiecewiseConstant {
            breaks,
            values,
            exterior,
        };
        f.merge_equal();
        Ok(f)
    }

    pub fn constant(window: &Interval, value: Rational, exterior: Rational) -> Self {
        PiecewiseConstant {
            breaks: vec![window.a.clone(), window.b.clone()],
            values: vec![value],
            exterior,
        }
    }

    fn merge_equal(&mut self) {
        let mut breaks = Vec::with_capacity(self.breaks.len());
        let mut values: Vec<Rational> = Vec::with_capacity(self.values.len());
        breaks.push(self.breaks[0].clone());
        for (i, v) in self.values.iter().enumerate() {
            if values.last() == Some(v) {
                *breaks.last_mut().unwrap() = self.breaks[i + 1].clone();
            } else {
                values.push(v.clone());
                breaks.push(self.breaks[i + 1].clone());
            }
        }
        self.breaks = breaks;
        self.values = values;
    }

    pub fn breaks(&self) -> &[Rational] {
        &self.breaks
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn exterior(&self) -> &Rational {
        &self.exterior
    }

    pub fn pieces(&self) -> usize {
        self.values.len()
    }

    pub fn window(&self) -> Interval {
        Interval {
            a: self.breaks[0].clone(),
            b: self.breaks.last().unwrap().clone(),
        }
    }

    pub fn piece(&self, i: usize) -> (Interval, &Rational) {
        (
            Interval {
                a: self.breaks[i].clone(),
                b: self.breaks[i + 1].clone(),
            },
            &self.values[i],
        )
    }

    /// Value at `x`, taking pieces as half-open `[x_i, x_{i+1})`.
    pub fn value_at(&self, x: &Rational) -> &Rational {
        match locate(&self.breaks, x) {
            Some(i) => &self.values[i],
            None => &self.exterior,
        }
    }

    /// Values resampled on a finer breakpoint list covering the same window.
    pub fn values_on(&self, breaks: &[Rational]) -> Vec<Rational> {
        breaks
            .windows(2)
            .map(|w| self.value_at(&w[0]).clone())
            .collect()
    }

    pub fn map_values(&self, mut f: impl FnMut(&Rational) -> Rational) -> PiecewiseConstant {
        let mut g = PiecewiseConstant {
            breaks: self.breaks.clone(),
            values: self.values.iter().map(&mut f).collect(),
            exterior: f(&self.exterior),
        };
        g.merge_equal();
        g
    }

    /// Visit `(overlap length, value)` for every part of `q`, including the
    /// exterior portions on either side of the window.
    pub fn for_each_overlap(&self, q: &Interval, mut visit: impl FnMut(Rational, &Rational)) {
        let x0 = &self.breaks[0];
        let xm = self.breaks.last().unwrap();
        if &q.a < x0 {
            let end = (&q.b).min(x0);
            visit(Rational::from(end - &q.a), &self.exterior);
        }
        if &q.b > xm {
            let start = (&q.a).max(xm);
            visit(Rational::from(&q.b - start), &self.exterior);
        }
        if &q.b <= x0 || &q.a >= xm {
            return;
        }
        let first = self.breaks.partition_point(|b| b <= &q.a).saturating_sub(1);
        for i in first..self.values.len() {
            let lo = &self.breaks[i];
            if lo >= &q.b {
                break;
            }
            let hi = &self.breaks[i + 1];
            let a = lo.max(&q.a);
            let b = hi.min(&q.b);
            if a < b {
                visit(Rational::from(b - a), &self.values[i]);
            }
        }
    }

    /// Exact `∫_Q f`.
    pub fn integral(&self, q: &Interval) -> Rational {
        let mut acc = Rational::new();
        self.for_each_overlap(q, |len, v| acc += len * v);
        acc
    }

    /// Total measure of `{f = value}` inside `q`.
    pub fn level_measure(&self, q: &Interval, value: &Rational) -> Rational {
        let mut acc = Rational::new();
        self.for_each_overlap(q, |len, v| {
            if v == value {
                acc += len;
            }
        });
        acc
    }
}

/// Common refinement of several step functions on `q`: the cut points and,
/// per sub-interval, the value of every function there.
fn merge_sorted(a: Vec<Rational>, b: &[Rational]) -> Vec<Rational> {
    if a.as_slice() == b {
        return a;
    }
    let mut out = Vec::with_capacity(a.len() + b.len());
    let mut a = a.into_iter().peekable();
    let mut b = b.iter().peekable();
    loop {
        let next = match (a.peek(), b.peek()) {
            (Some(x), Some(y)) if x < *y => a.next().unwrap(),
            (Some(x), Some(y)) if x > *y => b.next().unwrap().clone(),
            (Some(_), Some(_)) => {
                b.next();
                a.next().unwrap()
            }
            (Some(_), None) => a.next().unwrap(),
            (None, Some(_)) => b.next().unwrap().clone(),
            (None, None) => break,
        };
        out.push(next);
    }
    out
}

pub fn joint_pieces(fs: &[&PiecewiseConstant], q: &Interval) -> (Vec<Rational>, Vec<Vec<Rational>>) {
    // Break lists are sorted, so a linear merge replaces a full sort.
    let mut inner: Vec<Rational> = Vec::new();
    for f in fs {
        let lo = f.breaks.partition_point(|x| x <= &q.a);
        let hi = f.breaks.partition_point(|x| x < &q.b);
        inner = merge_sorted(inner, &f.breaks[lo..hi]);
    }
    let mut cuts = Vec::with_capacity(inner.len() + 2);
    cuts.push(q.a.clone());
    cuts.extend(inner);
    cuts.push(q.b.clone());
    let mut cursors = vec![0usize; fs.len()];
    let values = cuts
        .windows(2)
        .map(|w| {
            fs.iter()
                .zip(cursors.iter_mut())
                .map(|(f, i)| {
                    // The cut points increase, so each cursor only moves forward.
                    while *i < f.breaks.len() && f.breaks[*i] <= w[0] {
                        *i += 1;
                    }
                    if *i == 0 || *i == f.breaks.len() {
                        f.exterior.clone()
                    } else {
                        f.values[*i - 1].clone()
                    }
                })
                .collect()
        })
        .collect();
    (cuts, values)
}

/// Measure of each joint value tuple `(f_1(x), ..., f_m(x))` for `x` in `q`.
pub fn value_distribution(fs: &[&PiecewiseConstant], q: &Interval) -> BTreeMap<Vec<Rational>, Rational> {
    let (cuts, values) = joint_pieces(fs, q);
    let mut out: BTreeMap<Vec<Rational>, Rational> = BTreeMap::new();
    for (w, v) in cuts.windows(2).zip(values) {
        *out.entry(v).or_default() += Rational::from(&w[1] - &w[0]);
    }
    out
}

/// Memoised `v^gamma` for the handful of distinct values a weight takes.
pub(crate) struct PowerCache<'a> {
    gamma: &'a Scalar,
    prec: Precision,
    cache: HashMap<Rational, Scalar>,
}

impl<'a> PowerCache<'a> {
    pub(crate) fn new(gamma: &'a Scalar, prec: Precision) -> Self {
        PowerCache {
            gamma,
            prec,
            cache: HashMap::new(),
        }
    }

    pub(crate) fn get(&mut self, v: &Rational) -> &Scalar {
        let (gamma, prec) = (self.gamma, self.prec);
        self.cache
            .entry(v.clone())
            .or_insert_with(|| power(v, gamma, prec))
    }
}

/// Running sum that stays exact until a float term shows up.
pub(crate) enum Accumulator {
    Exact(Rational),
    Approx(Float),
}

impl Accumulator {
    pub(crate) fn new() -> Self {
        Accumulator::Exact(Rational::new())
    }

    pub(crate) fn add_product(&mut self, len: &Rational, term: &Scalar, prec: Precision) {
        match (&mut *self, term) {
            (Accumulator::Exact(acc), Scalar::Exact(t)) => *acc += Rational::from(len * t),
            (Accumulator::Exact(acc), Scalar::Approx(t)) => {
                let mut f = prec.float(&*acc);
                f += Float::with_val(prec.bits(), len) * t;
                *self = Accumulator::Approx(f);
            }
            (Accumulator::Approx(acc), t) => {
                *acc += Float::with_val(prec.bits(), len) * t.to_float(prec);
            }
        }
    }

    pub(crate) fn finish(self) -> Scalar {
        match self {
            Accumulator::Exact(q) => Scalar::Exact(q),
            Accumulator::Approx(f) => Scalar::Approx(f),
        }
    }
}

/// Strictly positive step function (a weight).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecewiseConstant", into = "PiecewiseConstant")]
pub struct Weight(PiecewiseConstant);

impl Weight {
    pub fn new(f: PiecewiseConstant) -> Result<Self> {
        if let Some(i) = f.values.iter().position(|v| *v <= 0) {
            return Err(Error::NonPositiveWeight { piece: i });
        }
        if f.exterior <= 0 {
            return Err(Error::NonPositiveWeight { piece: usize::MAX });
        }
        Ok(Weight(f))
    }

    pub fn into_inner(self) -> PiecewiseConstant {
        self.0
    }

    /// `∫_Q w^gamma`, exact when `gamma` is an integer.
    pub fn power_integral(&self, q: &Interval, gamma: &Scalar, prec: Precision) -> Scalar {
        let mut powers = PowerCache::new(gamma, prec);
        let mut acc = Accumulator::new();
        self.0.for_each_overlap(q, |len, v| {
            let t = powers.get(v);
            acc.add_product(&len, t, prec);
        });
        acc.finish()
    }

    /// Cumulative `∫ w^gamma` at every breakpoint.
    pub fn prefix_table(&self, gamma: &Scalar, prec: Precision) -> PrefixTable {
        let mut powers = PowerCache::new(gamma, prec);
        let per_piece: Vec<Scalar> = self.0.values.iter().map(|v| powers.get(v).clone()).collect();
        let exterior = powers.get(&self.0.exterior).clone();
        let exact = per_piece.iter().all(|s| s.as_rational().is_some())
            && exterior.as_rational().is_some();
        let lens = self.0.breaks.windows(2).map(|w| Rational::from(&w[1] - &w[0]));
        let sums = if exact {
            let mut acc = Rational::new();
            let mut out = vec![acc.clone()];
            for (len, p) in lens.zip(&per_piece) {
                acc += len * p.as_rational().unwrap();
                out.push(acc.clone());
            }
            PrefixSums::Exact(out)
        } else {
            let mut acc = prec.zero();
            let mut out = vec![acc.clone()];
            for (len, p) in lens.zip(&per_piece) {
                acc += Float::with_val(prec.bits(), &len) * p.to_float(prec);
                out.push(acc.clone());
            }
            PrefixSums::Approx(out)
        };
        PrefixTable {
            breaks: self.0.breaks.clone(),
            per_piece,
            exterior,
            sums,
            prec,
        }
    }
}

impl Deref for Weight {
    type Target = PiecewiseConstant;
    fn deref(&self) -> &PiecewiseConstant {
        &self.0
    }
}

impl TryFrom<PiecewiseConstant> for Weight {
    type Error = Error;
    fn try_from(f: PiecewiseConstant) -> Result<Self> {
        Weight::new(f)
    }
}

impl From<Weight> for PiecewiseConstant {
    fn from(w: Weight) -> Self {
        w.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PrefixSums {
    Exact(Vec<Rational>),
    Approx(Vec<Float>),
}

/// `S(x_i) = ∫_{x_0}^{x_i} w^gamma`, with O(1) interval queries.
#[derive(Clone, Debug)]
pub struct PrefixTable {
    breaks: Vec<Rational>,
    per_piece: Vec<Scalar>,
    exterior: Scalar,
    sums: PrefixSums,
    prec: Precision,
}

impl PrefixTable {
    pub fn sums(&self) -> &PrefixSums {
        &self.sums
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.sums, PrefixSums::Exact(_))
    }

    /// `S(x)` extended linearly through the exterior (negative left of `x_0`).
    pub fn at(&self, x: &Rational) -> Scalar {
        let x0 = &self.breaks[0];
        let m = self.breaks.len() - 1;
        let (i, base_x, rate) = if x < x0 {
            (0, x0, &self.exterior)
        } else if x >= &self.breaks[m] {
            (m, &self.breaks[m], &self.exterior)
        } else {
            let i = self.breaks.partition_point(|b| b <= x) - 1;
            (i, &self.breaks[i], &self.per_piece[i])
        };
        let offset = Rational::from(x - base_x);
        match (&self.sums, rate) {
            (PrefixSums::Exact(s), Scalar::Exact(r)) => Scalar::Exact(s[i].clone() + offset * r),
            (PrefixSums::Exact(s), r) => {
                let mut f = self.prec.float(&s[i]);
                f += Float::with_val(self.prec.bits(), &offset) * r.to_float(self.prec);
                Scalar::Approx(f)
            }
            (PrefixSums::Approx(s), r) => {
                let mut f = s[i].clone();
                f += Float::with_val(self.prec.bits(), &offset) * r.to_float(self.prec);
                Scalar::Approx(f)
            }
        }
    }

    /// `∫_Q w^gamma` from two table lookups.
    pub fn integral(&self, q: &Interval) -> Scalar {
        match (self.at(&q.b), self.at(&q.a)) {
            (Scalar::Exact(hi), Scalar::Exact(lo)) => Scalar::Exact(hi - lo),
            (hi, lo) => Scalar::Approx(hi.to_float(self.prec) - lo.to_float(self.prec)),
        }
    }
}

/// Continuous piecewise-affine function given by its node values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinearRepr", into = "LinearRepr")]
pub struct PiecewiseLinear {
    breaks: Vec<Rational>,
    nodes: Vec<Rational>,
    exterior: Rational,
}

#[derive(Serialize, Deserialize)]
struct LinearRepr {
    schema_version: u32,
    #[serde(with = "json::rational_vec")]
    breaks: Vec<Rational>,
    #[serde(with = "json::rational_vec")]
    nodes: Vec<Rational>,
    #[serde(with = "json::rational")]
    exterior: Rational,
}

impl TryFrom<LinearRepr> for PiecewiseLinear {
    type Error = Error;
    fn try_from(r: LinearRepr) -> Result<Self> {
        if r.schema_version != json::SCHEMA_VERSION {
            return Err(Error::Serialization(format!(
                "unsupported schema version {}",
                r.schema_version
            )));
        }
        PiecewiseLinear::new(r.breaks, r.nodes, r.exterior)
    }
}

impl From<PiecewiseLinear> for LinearRepr {
    fn from(f: PiecewiseLinear) -> Self {
        LinearRepr {
            schema_version: json::SCHEMA_VERSION,
            breaks: f.breaks,
            nodes: f.nodes,
            exterior: f.exterior,
        }
    }
}

impl PiecewiseLinear {
    pub fn new(breaks: Vec<Rational>, nodes: Vec<Rational>, exterior: Rational) -> Result<Self> {
        check_breaks(&breaks)?;
        if nodes.len() != breaks.len() {
            return Err(Error::ShapeMismatch {
                breaks: breaks.len(),
                values: nodes.len(),
            });
        }
        let mut f = PiecewiseLinear {
            breaks,
            nodes,
            exterior,
        };
        f.merge_collinear();
        Ok(f)
    }

    /// Integrate slopes from `start_value` at `breaks[0]`.
    pub fn from_slopes(
        breaks: Vec<Rational>,
        slopes: &[Rational],
        start_value: Rational,
        exterior: Rational,
    ) -> Result<Self> {
        check_breaks(&breaks)?;
        if slopes.len() + 1 != breaks.len() {
            return Err(Error::ShapeMismatch {
                breaks: breaks.len(),
                values: slopes.len(),
            });
        }
        let mut nodes = Vec::with_capacity(breaks.len());
        let mut cur = start_value;
        nodes.push(cur.clone());
        for (w, s) in breaks.windows(2).zip(slopes) {
            cur += Rational::from(&w[1] - &w[0]) * s;
            nodes.push(cur.clone());
        }
        PiecewiseLinear::new(breaks, nodes, exterior)
    }

    pub fn zero(window: &Interval) -> Self {
        PiecewiseLinear {
            breaks: vec![window.a.clone(), window.b.clone()],
            nodes: vec![Rational::new(), Rational::new()],
            exterior: Rational::new(),
        }
    }

    fn merge_collinear(&mut self) {
        let slopes: Vec<Rational> = self.slopes_raw();
        let mut breaks = vec![self.breaks[0].clone()];
        let mut nodes = vec![self.nodes[0].clone()];
        for i in 0..slopes.len() {
            if i + 1 < slopes.len() && slopes[i] == slopes[i + 1] {
                continue;
            }
            breaks.push(self.breaks[i + 1].clone());
            nodes.push(self.nodes[i + 1].clone());
        }
        self.breaks = breaks;
        self.nodes = nodes;
    }

    fn slopes_raw(&self) -> Vec<Rational> {
        self.breaks
            .windows(2)
            .zip(self.nodes.windows(2))
            .map(|(x, y)| Rational::from(&y[1] - &y[0]) / Rational::from(&x[1] - &x[0]))
            .collect()
    }

    pub fn breaks(&self) -> &[Rational] {
        &self.breaks
    }

    pub fn nodes(&self) -> &[Rational] {
        &self.nodes
    }

    pub fn exterior(&self) -> &Rational {
        &self.exterior
    }

    pub fn window(&self) -> Interval {
        Interval {
            a: self.breaks[0].clone(),
            b: self.breaks.last().unwrap().clone(),
        }
    }

    pub fn value_at(&self, x: &Rational) -> Rational {
        match locate(&self.breaks, x) {
            None if x == self.breaks.last().unwrap() => self.nodes.last().unwrap().clone(),
            None => self.exterior.clone(),
            Some(i) => {
                let t = Rational::from(x - &self.breaks[i]);
                let dx = Rational::from(&self.breaks[i + 1] - &self.breaks[i]);
                let dy = Rational::from(&self.nodes[i + 1] - &self.nodes[i]);
                self.nodes[i].clone() + t * dy / dx
            }
        }
    }

    /// Exact slopes as a step function; the exterior slope is zero.
    pub fn derivative(&self) -> PiecewiseConstant {
        PiecewiseConstant::new(self.breaks.clone(), self.slopes_raw(), Rational::new())
            .expect("breakpoints already validated")
    }

    /// `max |u|` over the window, attained at a node.
    pub fn sup_norm(&self) -> Rational {
        self.nodes
            .iter()
            .map(|v| v.clone().abs())
            .max()
            .unwrap_or_default()
    }

    /// Node values at both window ends equal the exterior constant.
    pub fn extends_continuously(&self) -> bool {
        self.nodes[0] == self.exterior && *self.nodes.last().unwrap() == self.exterior
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    fn two_piece() -> Weight {
        Weight::new(
            PiecewiseConstant::new(vec![q(0, 1), q(1, 2), q(1, 1)], vec![q(1, 1), q(1, 2)], q(1, 1))
                .unwrap(),
        )
        .unwrap()
    }

    fn unit() -> Interval {
        Interval::from_ratios((0, 1), (1, 1)).unwrap()
    }

    #[test]
    fn interval_rejects_empty() {
        assert!(Interval::from_ratios((1, 2), (1, 2)).is_err());
        assert!(Interval::from_ratios((1, 1), (0, 1)).is_err());
    }

    #[test]
    fn constant_weight_integrates_to_length() {
        let w = Weight::new(PiecewiseConstant::constant(&unit(), q(1, 1), q(1, 1))).unwrap();
        let p = Precision::default();
        let r = w.power_integral(&unit(), &Scalar::exact((-1, 2)), p);
        assert_eq!(r.to_f64(), 1.0);
    }

    #[test]
    fn two_piece_integrals() {
        let w = two_piece();
        let p = Precision::default();
        assert_eq!(w.power_integral(&unit(), &Scalar::exact(1), p), Scalar::exact((3, 4)));
        let r = w.power_integral(&unit(), &Scalar::exact((-1, 2)), p);
        let expect: Float = (p.float(1) + p.float(2).sqrt()) / 2;
        assert_eq!(r.precision(), Some(113));
        let err = Float::with_val(113, r.to_float(p) - &expect).abs();
        assert!(err < p.float(1e-32));
        assert!((r.to_f64() - 1.207_106_7).abs() < 1e-7);
    }

    #[test]
    fn exterior_contributes_outside_window() {
        let w = two_piece();
        let q2 = Interval::from_ratios((-1, 1), (2, 1)).unwrap();
        assert_eq!(w.integral(&q2), q(11, 4));
    }

    #[test]
    fn prefix_tables_match_examples() {
        let w = two_piece();
        let p = Precision::default();
        let t = w.prefix_table(&Scalar::exact(1), p);
        assert_eq!(t.sums(), &PrefixSums::Exact(vec![q(0, 1), q(1, 2), q(3, 4)]));
        let t = w.prefix_table(&Scalar::exact((-1, 2)), p);
        let PrefixSums::Approx(s) = t.sums() else {
            panic!("expected float sums")
        };
        assert!(s[0].is_zero());
        assert_eq!(s[1].to_f64(), 0.5);
        let expect = p.float(0.5) + Float::with_val(113, p.float(2).sqrt() / 2);
        assert!(Float::with_val(113, &s[2] - expect).abs() < p.float(1e-32));
    }

    #[test]
    fn unit_weight_prefix_is_offset() {
        let w = Weight::new(
            PiecewiseConstant::new(vec![q(0, 1), q(1, 3), q(1, 1)], vec![q(1, 1), q(1, 1)], q(1, 1))
                .unwrap(),
        )
        .unwrap();
        // merged to a single piece
        assert_eq!(w.pieces(), 1);
        let t = w.prefix_table(&Scalar::exact(1), Precision::default());
        assert_eq!(t.at(&q(2, 7)), Scalar::exact((2, 7)));
    }

    #[test]
    fn derivative_of_tent() {
        let u = PiecewiseLinear::new(vec![q(0, 1), q(1, 2), q(1, 1)], vec![q(0, 1), q(1, 3), q(0, 1)], q(0, 1))
            .unwrap();
        let d = u.derivative();
        assert_eq!(d.values(), &[q(2, 3), q(-2, 3)]);
        assert_eq!(*d.exterior(), 0);
        assert_eq!(u.sup_norm(), q(1, 3));
        assert!(u.extends_continuously());
        assert_eq!(u.value_at(&q(1, 4)), q(1, 6));
    }

    #[test]
    fn zero_function() {
        let u = PiecewiseLinear::zero(&unit());
        assert_eq!(u.sup_norm(), 0);
        assert_eq!(u.derivative().values(), &[q(0, 1)]);
    }

    #[test]
    fn single_tooth_slopes() {
        let t = crate::sequences::build_table(1).unwrap();
        let breaks = vec![q(0, 1), t.alpha(1).clone(), q(1, 1)];
        let u = PiecewiseLinear::from_slopes(breaks, &[t.h(1).clone(), t.b().clone()], q(0, 1), q(0, 1))
            .unwrap();
        assert_eq!(u.derivative().values(), &[t.h(1).clone(), t.b().clone()]);
        assert_eq!(*u.nodes().last().unwrap(), 0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PiecewiseConstant::new(vec![q(0, 1), q(0, 1)], vec![q(1, 1)], q(1, 1)).is_err());
        assert!(PiecewiseConstant::new(vec![q(0, 1), q(1, 1)], vec![], q(1, 1)).is_err());
        let f = PiecewiseConstant::new(vec![q(0, 1), q(1, 1)], vec![q(0, 1)], q(1, 1)).unwrap();
        assert!(Weight::new(f).is_err());
    }

    #[test]
    fn step_json_round_trip() {
        let w = two_piece();
        let text = serde_json::to_string(&w).unwrap();
        assert!(text.contains("\"schema_version\":1"));
        let back: Weight = serde_json::from_str(&text).unwrap();
        assert_eq!(back, w);
        let bad = text.replace("[1,2]", "[-1,2]");
        assert!(serde_json::from_str::<Weight>(&bad).is_err());
    }

    #[test]
    fn refinement_merges_sorted() {
        let a = vec![q(0, 1), q(1, 2), q(1, 1)];
        let b = vec![q(0, 1), q(1, 3), q(1, 2)];
        assert_eq!(common_refinement(&a, &b), vec![q(0, 1), q(1, 3), q(1, 2), q(1, 1)]);
    }
}
