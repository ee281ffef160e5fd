//! Truncated Whitney decompositions of finite unions of open intervals.
//!
//! Each component `(a, b)` of length `L` is cut into dyadic distance layers:
//! layer `j` on the left is `[a + 2^{-j-1}L, a + 2^{-j}L]`, mirrored on the
//! right, and every layer is split into 128 equal cubes. Layer 1 on both sides
//! together is the central block `[a + L/4, b - L/4]`. Layers stop at the
//! truncation depth `D`, leaving two end slivers of width `2^{-D-1}L`.

use rayon::prelude::*;
use rug::Rational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Interval;
use crate::json;
use crate::scalar::pow2;

pub const CUBES_PER_LAYER: u32 = 128;

/// Sizing constant: `diam(W) * SIZING <= dist(W, complement)`.
pub const SIZING: u32 = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCube {
    pub interval: Interval,
    /// Index of the enclosing cube one level up.
    pub parent: Option<usize>,
    /// Index of the component of this level's open set.
    pub component: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyLevel {
    pub level: u32,
    pub omega: Vec<Interval>,
    /// Sorted left to right.
    pub cubes: Vec<WhitneyCube>,
    pub residual: Vec<Interval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyForest {
    depth: u32,
    levels: Vec<WhitneyLevel>,
}

fn check_components(omega: &[Interval]) -> Result<Vec<Interval>> {
    let mut sorted = omega.to_vec();
    sorted.sort_by(|x, y| x.a().cmp(y.a()));
    for (i, pair) in sorted.windows(2).enumerate() {
        if pair[0].b() > pair[1].a() {
            return Err(Error::Overlap {
                first: i,
                second: i + 1,
            });
        }
    }
    Ok(sorted)
}

/// Cubes of one component (left to right) and its two residual slivers.
pub fn decompose_component(c: &Interval, depth: u32) -> (Vec<Interval>, [Interval; 2]) {
    let (a, b) = (c.a(), c.b());
    let len = c.len();
    let n = CUBES_PER_LAYER as usize;
    let mut cubes = Vec::with_capacity(2 * n * depth as usize);
    let split = |lo: Rational, hi: Rational, out: &mut Vec<Interval>| {
        let step = Rational::from(&hi - &lo) / CUBES_PER_LAYER;
        let mut x = lo;
        for i in 0..n {
            let next = if i + 1 == n {
                hi.clone()
            } else {
                Rational::from(&x + &step)
            };
            out.push(Interval::new(x, next.clone()).expect("positive layer width"));
            x = next;
        }
    };
    for j in (1..=depth as i64).rev() {
        let lo = Rational::from(a + &len * pow2(-j - 1));
        let hi = Rational::from(a + &len * pow2(-j));
        split(lo, hi, &mut cubes);
    }
    for j in 1..=depth as i64 {
        let lo = Rational::from(b - &len * pow2(-j));
        let hi = Rational::from(b - &len * pow2(-j - 1));
        split(lo, hi, &mut cubes);
    }
    let sliver = len * pow2(-(depth as i64) - 1);
    let residual = [
        Interval::new(a.clone(), Rational::from(a + &sliver)).unwrap(),
        Interval::new(Rational::from(b - &sliver), b.clone()).unwrap(),
    ];
    (cubes, residual)
}

fn decompose_level(level: u32, omega: Vec<Interval>, depth: u32) -> WhitneyLevel {
    let parts: Vec<_> = omega
        .par_iter()
        .map(|c| decompose_component(c, depth))
        .collect();
    let mut cubes = Vec::new();
    let mut residual = Vec::new();
    for (component, (cs, res)) in parts.into_iter().enumerate() {
        cubes.extend(cs.into_iter().map(|interval| WhitneyCube {
            interval,
            parent: None,
            component,
        }));
        residual.extend(res);
    }
    WhitneyLevel {
        level,
        omega,
        cubes,
        residual,
    }
}

/// Whitney decomposition of `omega` truncated at `depth` layers.
pub fn decompose(omega: &[Interval], depth: u32) -> Result<WhitneyForest> {
    if depth == 0 {
        return Err(Error::InvalidParameter("Whitney depth must be at least 1".into()));
    }
    let omega = check_components(omega)?;
    Ok(WhitneyForest {
        depth,
        levels: vec![decompose_level(1, omega, depth)],
    })
}

/// Smallest `D >= 1` with `measure * 2^{-D} <= epsilon`.
pub fn depth_for_budget(measure: &Rational, epsilon: &Rational) -> Result<u32> {
    if *epsilon <= 0 {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let mut d = 1u32;
    while Rational::from(measure * pow2(-(d as i64))) > *epsilon {
        d += 1;
    }
    Ok(d)
}

/// Index of the cube (sorted, disjoint) that could contain `x`'s neighbourhood.
fn first_cube_ending_after(cubes: &[WhitneyCube], x: &Rational) -> usize {
    cubes.partition_point(|c| c.interval.b() <= x)
}

impl WhitneyLevel {
    pub fn residual_measure(&self) -> Rational {
        self.residual.iter().map(Interval::len).sum()
    }

    pub fn omega_measure(&self) -> Rational {
        self.omega.iter().map(Interval::len).sum()
    }

    /// Cubes violating `100 diam(W) <= dist(W, complement)`; empty when sizing holds.
    pub fn sizing_violations(&self) -> Vec<usize> {
        self.cubes
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                let comp = &self.omega[c.component];
                let d_left = Rational::from(c.interval.a() - comp.a());
                let d_right = Rational::from(comp.b() - c.interval.b());
                c.interval.len() * SIZING > d_left.min(d_right)
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn touches_complement(&self, probe: &Interval) -> bool {
        !self.omega.iter().any(|c| c.contains(probe))
    }

    /// `max_C Σ_{W ∩ C ≠ ∅} |W| / |C|` over probes meeting the complement.
    pub fn overlap_constant(&self, probes: &[Interval]) -> Result<Rational> {
        let mut worst = Rational::new();
        for (i, probe) in probes.iter().enumerate() {
            if !self.touches_complement(probe) {
                return Err(Error::InteriorProbe(i));
            }
            let mut total = Rational::new();
            let start = first_cube_ending_after(&self.cubes, probe.a());
            for c in &self.cubes[start..] {
                if c.interval.a() >= probe.b() {
                    break;
                }
                total += c.interval.len();
            }
            let ratio = total / probe.len();
            if ratio > worst {
                worst = ratio;
            }
        }
        Ok(worst)
    }

    /// `(∪ closures of cubes) ∪ residual` has the same measure as `omega`.
    pub fn covers_omega(&self) -> bool {
        let cubes: Rational = self.cubes.iter().map(|c| c.interval.len()).sum();
        cubes + self.residual_measure() == self.omega_measure()
    }
}

impl WhitneyForest {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn levels(&self) -> &[WhitneyLevel] {
        &self.levels
    }

    pub fn level(&self, k: u32) -> &WhitneyLevel {
        &self.levels[k as usize - 1]
    }

    /// Decompose the next level's open set; every component must sit inside
    /// one cube of the current deepest level.
    pub fn refine(&mut self, omega: &[Interval]) -> Result<()> {
        let omega = check_components(omega)?;
        let prev = self.levels.last().expect("forest has a level");
        let mut parents = Vec::with_capacity(omega.len());
        for (i, comp) in omega.iter().enumerate() {
            let idx = first_cube_ending_after(&prev.cubes, comp.a());
            match prev.cubes.get(idx) {
                Some(c) if c.interval.contains(comp) => parents.push(idx),
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "component {i} is not inside a single cube of level {}",
                        prev.level
                    )))
                }
            }
        }
        let mut next = decompose_level(prev.level + 1, omega, self.depth);
        for cube in &mut next.cubes {
            cube.parent = Some(parents[cube.component]);
        }
        self.levels.push(next);
        Ok(())
    }

    pub fn sizing_holds(&self) -> bool {
        self.levels.iter().all(|l| l.sizing_violations().is_empty())
    }

    /// Every deeper cube meeting a shallower cube lies inside it, and parent
    /// links point at the enclosing cube.
    pub fn nesting_holds(&self) -> bool {
        self.levels.windows(2).all(|pair| {
            let (upper, lower) = (&pair[0], &pair[1]);
            lower.cubes.iter().all(|c| {
                let start = first_cube_ending_after(&upper.cubes, c.interval.a());
                let crossing_ok = upper.cubes[start..]
                    .iter()
                    .take_while(|u| u.interval.a() < c.interval.b())
                    .all(|u| u.interval.contains(&c.interval));
                let parent_ok = c
                    .parent
                    .is_some_and(|p| upper.cubes[p].interval.contains(&c.interval));
                crossing_ok && parent_ok
            })
        })
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Row<'a> {
            level: u32,
            interval: &'a Interval,
            parent: Option<usize>,
        }
        #[derive(Serialize)]
        struct Export<'a> {
            schema_version: u32,
            depth: u32,
            #[serde(with = "json::rational_vec")]
            residual_measure: Vec<Rational>,
            cubes: Vec<Row<'a>>,
        }
        let export = Export {
            schema_version: json::SCHEMA_VERSION,
            depth: self.depth,
            residual_measure: self.levels.iter().map(|l| l.residual_measure()).collect(),
            cubes: self
                .levels
                .iter()
                .flat_map(|l| {
                    l.cubes.iter().map(move |c| Row {
                        level: l.level,
                        interval: &c.interval,
                        parent: c.parent,
                    })
                })
                .collect(),
        };
        serde_json::to_string(&export).map_err(|e| Error::Serialization(e.to_string()))
    }
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
    fn first_left_layer_of_unit_interval() {
        let f = decompose(&[unit()], 3).unwrap();
        let lvl = f.level(1);
        let layer: Vec<_> = lvl
            .cubes
            .iter()
            .filter(|c| c.interval.a() >= &q(1, 4) && c.interval.b() <= &q(1, 2))
            .collect();
        assert_eq!(layer.len(), 128);
        assert!(layer.iter().all(|c| c.interval.len() == q(1, 512)));
        assert_eq!(layer[0].interval.a(), &q(1, 4));
        assert_eq!(layer[127].interval.b(), &q(1, 2));
    }

    #[test]
    fn residual_is_geometric_tail() {
        for d in 1..=8 {
            let f = decompose(&[unit()], d).unwrap();
            assert_eq!(f.level(1).residual_measure(), pow2(-(d as i64)));
            assert!(f.level(1).covers_omega());
        }
    }

    #[test]
    fn sizing_holds_exactly() {
        let omega = [
            Interval::from_ratios((0, 1), (1, 3)).unwrap(),
            Interval::from_ratios((1, 2), (7, 8)).unwrap(),
        ];
        let f = decompose(&omega, 5).unwrap();
        assert!(f.sizing_holds());
        assert_eq!(f.level(1).cubes.len(), 2 * 2 * 128 * 5);
    }

    #[test]
    fn rejects_overlaps_and_zero_depth() {
        let omega = [
            Interval::from_ratios((0, 1), (1, 2)).unwrap(),
            Interval::from_ratios((1, 4), (1, 1)).unwrap(),
        ];
        assert!(matches!(decompose(&omega, 2), Err(Error::Overlap { .. })));
        assert!(decompose(&[unit()], 0).is_err());
        // touching components are fine
        let touching = [
            Interval::from_ratios((0, 1), (1, 2)).unwrap(),
            Interval::from_ratios((1, 2), (1, 1)).unwrap(),
        ];
        assert!(decompose(&touching, 2).is_ok());
    }

    #[test]
    fn overlap_examples() {
        let f = decompose(&[unit()], 6).unwrap();
        let lvl = f.level(1);
        let big = Interval::from_ratios((-1, 2), (3, 2)).unwrap();
        assert!(lvl.overlap_constant(&[big]).unwrap() <= q(1, 2));
        let edge = Interval::from_ratios((-1, 1000), (1, 1000)).unwrap();
        assert!(lvl.overlap_constant(&[edge]).unwrap() <= 2);
        let away = Interval::from_ratios((2, 1), (3, 1)).unwrap();
        assert_eq!(lvl.overlap_constant(&[away]).unwrap(), 0);
        let inside = Interval::from_ratios((1, 4), (3, 4)).unwrap();
        assert!(matches!(
            lvl.overlap_constant(&[inside]),
            Err(Error::InteriorProbe(0))
        ));
    }

    #[test]
    fn refinement_nests() {
        let mut f = decompose(&[unit()], 2).unwrap();
        // open sub-intervals strictly inside two level-1 cubes
        let cubes = f.level(1).cubes.clone();
        let inner: Vec<Interval> = [3usize, 300]
            .iter()
            .map(|&i| cubes[i].interval.dilate(&q(1, 2)))
            .collect();
        f.refine(&inner).unwrap();
        assert!(f.nesting_holds());
        assert!(f.sizing_holds());
        let crossing = Interval::new(cubes[3].interval.midpoint(), cubes[4].interval.midpoint()).unwrap();
        assert!(f.refine(&[crossing]).is_err());
    }

    #[test]
    fn depth_budget() {
        assert_eq!(depth_for_budget(&q(1, 1), &pow2(-10)).unwrap(), 10);
        assert_eq!(depth_for_budget(&q(1, 2), &pow2(-10)).unwrap(), 9);
        assert_eq!(depth_for_budget(&q(1, 1), &q(1, 1)).unwrap(), 1);
    }

    #[test]
    fn json_lists_cubes() {
        let f = decompose(&[unit()], 1).unwrap();
        let text = f.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["cubes"].as_array().unwrap().len(), 256);
        assert_eq!(v["schema_version"], 1);
    }
}
