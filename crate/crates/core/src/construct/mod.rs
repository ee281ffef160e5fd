//! One-dimensional construction of the weight `w` and the function `u`.
//!
//! Starting from `u = 0` on `[0, 1]`, level 1 replaces the flat function by
//! teeth of slopes `b` (the `B` set) and `h^1`. Level `k` replaces every
//! `h^k` piece by teeth of slopes `-2^k` (the `G_k` set) and `h^{k+1}`, until
//! the `h^N` pieces are relabelled `G_N` (`h^N = -2^N`). The weight is 1 on
//! `B`, `2^{-k}` on `G_k` and 1 outside `[0, 1]`.

mod audit;
mod sawtooth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::checks::CheckReport;
use crate::error::{Error, Result};
use crate::geometry::{Interval, PiecewiseConstant, PiecewiseLinear, Weight};
use crate::json;
use crate::scalar::pow2;
use crate::sequences::{build_table, SequenceTable};
use crate::whitney::{self, WhitneyForest, CUBES_PER_LAYER};

pub use audit::{audit, DiagnosticsReport};
pub use sawtooth::{sawtooth_replace, Part, SawtoothFragment, ToothShape};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Refinement {
    /// Every `h^k` piece is refined as a single cell. All level-1 teeth are
    /// congruent, so one tooth is refined and then tiled.
    #[default]
    Nested,
    /// Every `h^k` component is cut into truncated Whitney cubes first; the
    /// end slivers keep slope `h^k` and count as error. `depth: None` picks
    /// the smallest depth whose slivers fit in the error budget.
    Whitney { depth: Option<u32> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TeethPolicy {
    /// `children` teeth per cell below level 1; the level-1 count is the
    /// smallest one whose summed excursion bound fits in `delta`.
    Budget { children: u64 },
    /// Per cell `W` at level `k`: `ceil(|W| (|s| + |parent|) 2^{k+1} / delta)`,
    /// `s` the new side slope (level 1 uses `k = 0`).
    Geometric,
    Fixed { first: u64, children: u64 },
    /// `children[k - 1]` teeth per `h^k` cell; missing levels get one tooth.
    Schedule { first: u64, children: Vec<u64> },
}

impl Default for TeethPolicy {
    fn default() -> Self {
        TeethPolicy::Budget { children: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildParams {
    pub n: u32,
    #[serde(with = "json::rational")]
    pub delta: Rational,
    #[serde(with = "json::rational")]
    pub epsilon: Rational,
    /// Largest exponent the result is meant to be tested at.
    pub p_hint: f64,
    #[serde(default)]
    pub refinement: Refinement,
    #[serde(default)]
    pub teeth: TeethPolicy,
    #[serde(default)]
    pub shape: ToothShape,
    pub max_pieces: usize,
}

pub const DEFAULT_MAX_PIECES: usize = 5_000_000;

impl BuildParams {
    pub fn new(n: u32) -> Self {
        let p_hint = 3.0;
        BuildParams {
            n,
            delta: pow2(-10),
            epsilon: Self::default_epsilon(n, p_hint),
            p_hint,
            refinement: Refinement::default(),
            teeth: TeethPolicy::default(),
            shape: ToothShape::default(),
            max_pieces: DEFAULT_MAX_PIECES,
        }
    }

    /// `2^{-ceil((n + 2) p)}`, which leaves a factor `2^{-p}` of room in
    /// `2^{(n+1)p} epsilon <= 1`.
    pub fn default_epsilon(n: u32, p_hint: f64) -> Rational {
        pow2(-(((n as f64 + 2.0) * p_hint).ceil() as i64))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.delta <= 0 {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if self.epsilon <= 0 {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !self.p_hint.is_finite() || self.p_hint < 1.0 {
            return bad(format!("p_hint must be a finite number >= 1, got {}", self.p_hint));
        }
        let log2_eps = Float::with_val(128, &self.epsilon).log2();
        let slack = log2_eps + (self.n as f64 + 1.0) * self.p_hint;
        if slack > 0 {
            return bad(format!(
                "epsilon {} too large: need 2^((n+1) p) epsilon <= 1 for n = {}, p = {}",
                self.epsilon, self.n, self.p_hint
            ));
        }
        match self.teeth {
            TeethPolicy::Budget { children: 0 } | TeethPolicy::Fixed { children: 0, .. } => {
                return bad("children teeth count must be positive".into())
            }
            TeethPolicy::Schedule { ref children, .. } if children.contains(&0) => {
                return bad("children teeth count must be positive".into())
            }
            TeethPolicy::Fixed { first: 0, .. } | TeethPolicy::Schedule { first: 0, .. } => {
                return bad("level-1 teeth count must be positive".into())
            }
            _ => {}
        }
        if self.refinement == (Refinement::Whitney { depth: Some(0) }) {
            return bad("Whitney depth must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    B,
    G(u32),
    /// Transient label of pieces still carrying slope `h^k`.
    H(u32),
    /// Leftover of level `k` that was not refined; slope `h^k`, weight `2^{-k}`.
    Error(u32),
    Exterior,
}

impl Region {
    pub fn slope(self, t: &SequenceTable) -> Rational {
        match self {
            Region::B => t.b().clone(),
            Region::G(k) => t.g_slope(k).clone(),
            Region::H(k) | Region::Error(k) => t.h(k).clone(),
            Region::Exterior => Rational::new(),
        }
    }

    pub fn weight(self) -> Rational {
        match self {
            Region::B | Region::Exterior => Rational::from(1),
            Region::G(k) | Region::H(k) | Region::Error(k) => pow2(-(k as i64)),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::B => write!(f, "B"),
            Region::G(k) => write!(f, "G{k}"),
            Region::H(k) => write!(f, "H{k}"),
            Region::Error(k) => write!(f, "E{k}"),
            Region::Exterior => write!(f, "ext"),
        }
    }
}

impl FromStr for Region {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let level = |rest: &str| {
            rest.parse::<u32>()
                .ok()
                .filter(|k| *k >= 1)
                .ok_or_else(|| Error::Serialization(format!("bad region label {s:?}")))
        };
        match s {
            "B" => Ok(Region::B),
            "ext" => Ok(Region::Exterior),
            _ if s.starts_with('G') => level(&s[1..]).map(Region::G),
            _ if s.starts_with('H') => level(&s[1..]).map(Region::H),
            _ if s.starts_with('E') => level(&s[1..]).map(Region::Error),
            _ => Err(Error::Serialization(format!("bad region label {s:?}"))),
        }
    }
}

impl Serialize for Region {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Region {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Labels of the pieces of `[0, 1]`; neighbours always differ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionLabeling {
    #[serde(with = "json::rational_vec")]
    breaks: Vec<Rational>,
    regions: Vec<Region>,
}

impl PartitionLabeling {
    fn merged(breaks: Vec<Rational>, regions: Vec<Region>) -> Self {
        let mut out_b = Vec::with_capacity(breaks.len());
        let mut out_r: Vec<Region> = Vec::with_capacity(regions.len());
        let mut it = breaks.into_iter();
        out_b.push(it.next().expect("at least one break"));
        for (x, r) in it.zip(regions) {
            if out_r.last() == Some(&r) {
                *out_b.last_mut().unwrap() = x;
            } else {
                out_b.push(x);
                out_r.push(r);
            }
        }
        PartitionLabeling {
            breaks: out_b,
            regions: out_r,
        }
    }

    pub fn breaks(&self) -> &[Rational] {
        &self.breaks
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn pieces(&self) -> usize {
        self.regions.len()
    }

    pub fn piece(&self, i: usize) -> (Interval, Region) {
        let iv = Interval::new(self.breaks[i].clone(), self.breaks[i + 1].clone())
            .expect("labeling breaks increase");
        (iv, self.regions[i])
    }

    /// Label of the piece `[x_i, x_{i+1})` containing `x`.
    pub fn region_at(&self, x: &Rational) -> Region {
        if x < &self.breaks[0] || x >= self.breaks.last().unwrap() {
            return Region::Exterior;
        }
        let i = self.breaks.partition_point(|b| b <= x) - 1;
        self.regions[i]
    }

    pub fn measure(&self, region: Region) -> Rational {
        self.measures().remove(&region).unwrap_or_default()
    }

    pub fn measures(&self) -> BTreeMap<Region, Rational> {
        let mut out: BTreeMap<Region, Rational> = BTreeMap::new();
        for (w, r) in self.breaks.windows(2).zip(&self.regions) {
            *out.entry(*r).or_default() += Rational::from(&w[1] - &w[0]);
        }
        out
    }

    /// Measure of each region inside `cell`.
    pub fn measures_in(&self, cell: &Interval) -> BTreeMap<Region, Rational> {
        let mut out: BTreeMap<Region, Rational> = BTreeMap::new();
        let start = self.breaks.partition_point(|b| b <= cell.a()).saturating_sub(1);
        for i in start..self.regions.len() {
            if &self.breaks[i] >= cell.b() {
                break;
            }
            let lo = self.breaks[i].clone().max(cell.a().clone());
            let hi = self.breaks[i + 1].clone().min(cell.b().clone());
            if lo < hi {
                *out.entry(self.regions[i]).or_default() += hi - lo;
            }
        }
        out
    }
}

/// Cells refined at one level, with the index of the enclosing cell one
/// level up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellLevel {
    pub level: u32,
    pub cells: Vec<Interval>,
    pub parents: Vec<Option<usize>>,
}

#[derive(Clone, Debug)]
pub struct Construction {
    params: BuildParams,
    table: SequenceTable,
    labeling: PartitionLabeling,
    u: PiecewiseLinear,
    w: Weight,
    history: Vec<CellLevel>,
    forest: Option<WhitneyForest>,
    teeth: Vec<u64>,
    diagnostics: DiagnosticsReport,
}

impl Construction {
    pub fn params(&self) -> &BuildParams {
        &self.params
    }

    pub fn table(&self) -> &SequenceTable {
        &self.table
    }

    pub fn labeling(&self) -> &PartitionLabeling {
        &self.labeling
    }

    pub fn u(&self) -> &PiecewiseLinear {
        &self.u
    }

    pub fn w(&self) -> &Weight {
        &self.w
    }

    pub fn history(&self) -> &[CellLevel] {
        &self.history
    }

    pub fn forest(&self) -> Option<&WhitneyForest> {
        self.forest.as_ref()
    }

    /// Teeth per cell: index 0 is level 1, index `k` the refinement of the
    /// `h^k` cells (the largest count when it varies between cells).
    pub fn teeth(&self) -> &[u64] {
        &self.teeth
    }

    pub fn diagnostics(&self) -> &DiagnosticsReport {
        &self.diagnostics
    }
}

impl Serialize for Construction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Bundle<'a> {
            schema_version: u32,
            params: &'a BuildParams,
            table: &'a SequenceTable,
            teeth: &'a [u64],
            labeling: &'a PartitionLabeling,
            u: &'a PiecewiseLinear,
            w: &'a Weight,
            diagnostics: &'a CheckReport,
        }
        Bundle {
            schema_version: json::SCHEMA_VERSION,
            params: &self.params,
            table: &self.table,
            teeth: &self.teeth,
            labeling: &self.labeling,
            u: &self.u,
            w: &self.w,
            diagnostics: &self.diagnostics,
        }
        .serialize(s)
    }
}

fn ceil_u64(x: &Rational) -> Result<u64> {
    let c = x.clone().ceil().numer().clone();
    c.to_u64()
        .ok_or_else(|| Error::InvalidParameter(format!("teeth count {c} out of range")))
}

/// Excursion factor of one tooth relative to the centered layout.
fn shape_factor(shape: ToothShape) -> u64 {
    match shape {
        ToothShape::Centered => 1,
        ToothShape::Leading => 2,
    }
}

/// Level-1 teeth count.
fn first_teeth(p: &BuildParams, t: &SequenceTable) -> Result<u64> {
    let n = t.n();
    match p.teeth {
        TeethPolicy::Fixed { first, .. } | TeethPolicy::Schedule { first, .. } => Ok(first),
        TeethPolicy::Geometric => Ok(ceil_u64(&(Rational::from(t.b() * 2) / &p.delta))?.max(1)),
        TeethPolicy::Budget { children } => {
            // Centered excursions: level 1 contributes alpha_1 |h^1| T / 2, level k
            // contributes (|h^k| - 2^k) mu_k T / (2 c^k); their sum must fit in delta.
            let mut c = Rational::from(t.alpha(1) * t.h(1)).abs();
            let mut scale = Rational::from(1);
            for k in 1..n {
                scale /= children;
                let gap = Rational::from(t.h(k).abs_ref()) - pow2(k as i64);
                c += gap * t.mu(k) * &scale;
            }
            c = c * shape_factor(p.shape) / 2;
            Ok(ceil_u64(&(c / &p.delta))?.max(1))
        }
    }
}

/// Teeth for one `h^k` cell of length `len`.
fn child_teeth(p: &BuildParams, t: &SequenceTable, k: u32, len: &Rational) -> Result<u64> {
    match p.teeth {
        TeethPolicy::Fixed { children, .. } | TeethPolicy::Budget { children } => Ok(children),
        TeethPolicy::Schedule { ref children, .. } => Ok(children.get(k as usize - 1).copied().unwrap_or(1)),
        TeethPolicy::Geometric => {
            let spread = pow2(k as i64) + Rational::from(t.h(k).abs_ref());
            let m = Rational::from(len * spread) * pow2(k as i64 + 1) / &p.delta;
            Ok(ceil_u64(&m)?.max(1))
        }
    }
}

/// Sawtooth of `H(k)` on `cell` into `G(k)` sides and an `H(k+1)` core.
fn split_cell(
    p: &BuildParams,
    t: &SequenceTable,
    k: u32,
    cell: &Interval,
    m: u64,
) -> Result<(Vec<Rational>, Vec<Region>)> {
    let core = Rational::from(t.alpha(k + 1) / t.alpha(k));
    let side = Rational::from(t.mu(k) / t.alpha(k));
    let frag = sawtooth_replace(cell, t.h(k), t.h(k + 1), &core, t.g_slope(k), &side, m, p.shape)?;
    let regions = frag
        .parts
        .iter()
        .map(|part| match part {
            Part::First => Region::H(k + 1),
            Part::Second => Region::G(k),
        })
        .collect();
    Ok((frag.breaks, regions))
}

/// Level-1 sawtooth on `window` with `m` teeth.
fn first_level(p: &BuildParams, t: &SequenceTable, window: &Interval, m: u64) -> Result<PartitionLabeling> {
    let frag = sawtooth_replace(window, &Rational::new(), t.h(1), t.alpha(1), t.b(), t.beta(), m, p.shape)?;
    let regions = frag
        .parts
        .iter()
        .map(|part| match part {
            Part::First => Region::H(1),
            Part::Second => Region::B,
        })
        .collect();
    Ok(PartitionLabeling::merged(frag.breaks, regions))
}

/// Replace every piece labelled `target` using `refine(piece_index, interval)`,
/// which returns the breaks (starting at the piece's left end) and labels.
fn rewrite(
    lab: &PartitionLabeling,
    target: Region,
    mut refine: impl FnMut(usize, &Interval) -> Result<(Vec<Rational>, Vec<Region>)>,
) -> Result<PartitionLabeling> {
    let mut breaks = vec![lab.breaks[0].clone()];
    let mut regions = Vec::with_capacity(lab.regions.len());
    for i in 0..lab.pieces() {
        let (iv, r) = lab.piece(i);
        if r == target {
            let (b, rs) = refine(i, &iv)?;
            breaks.extend(b.into_iter().skip(1));
            regions.extend(rs);
        } else {
            breaks.push(iv.b().clone());
            regions.push(r);
        }
    }
    Ok(PartitionLabeling::merged(breaks, regions))
}

fn relabel_last(lab: PartitionLabeling, n: u32) -> PartitionLabeling {
    let regions = lab
        .regions
        .into_iter()
        .map(|r| if r == Region::H(n) { Region::G(n) } else { r })
        .collect();
    PartitionLabeling::merged(lab.breaks, regions)
}

fn cells_of(lab: &PartitionLabeling, target: Region) -> Vec<Interval> {
    (0..lab.pieces())
        .map(|i| lab.piece(i))
        .filter(|(_, r)| *r == target)
        .map(|(iv, _)| iv)
        .collect()
}

struct Layout {
    labeling: PartitionLabeling,
    history: Vec<CellLevel>,
    forest: Option<WhitneyForest>,
    teeth: Vec<u64>,
}

fn guard(pieces: usize, limit: usize) -> Result<()> {
    if pieces > limit {
        Err(Error::TooManyPieces { pieces, limit })
    } else {
        Ok(())
    }
}

fn build_nested(p: &BuildParams, t: &SequenceTable) -> Result<Layout> {
    let n = t.n();
    let m1 = first_teeth(p, t)?;
    let period = Rational::from((1, m1));
    let tooth = Interval::new(Rational::new(), period.clone())?;
    let mut lab = first_level(p, t, &tooth, 1)?;
    let mut teeth = vec![m1];
    // Cells of one tooth, with parents local to the tooth.
    let mut local: Vec<(Vec<Interval>, Vec<Option<usize>>)> = Vec::new();
    let mut parents_next: Vec<Option<usize>> = vec![None];
    for k in 1..=n {
        let cells = cells_of(&lab, Region::H(k));
        local.push((cells.clone(), parents_next.clone()));
        if k == n {
            break;
        }
        let m = child_teeth(p, t, k, &cells[0].len())?;
        let estimate = (lab.pieces() + 3 * m as usize * cells.len()).saturating_mul(m1 as usize);
        guard(estimate, p.max_pieces)?;
        teeth.push(m);
        let mut next_parents = Vec::new();
        let mut cell_idx = 0usize;
        lab = rewrite(&lab, Region::H(k), |_, iv| {
            let out = split_cell(p, t, k, iv, m)?;
            let cores = out.1.iter().filter(|r| **r == Region::H(k + 1)).count();
            next_parents.extend(std::iter::repeat(Some(cell_idx)).take(cores));
            cell_idx += 1;
            Ok(out)
        })?;
        parents_next = next_parents;
    }
    lab = relabel_last(lab, n);

    guard(lab.pieces().saturating_mul(m1 as usize), p.max_pieces)?;
    let mut breaks = Vec::with_capacity(lab.pieces() * m1 as usize + 1);
    let mut regions = Vec::with_capacity(lab.pieces() * m1 as usize);
    breaks.push(Rational::new());
    for j in 0..m1 {
        let offset = Rational::from(&period * j);
        for (i, r) in lab.regions.iter().enumerate() {
            let x = if i + 1 == lab.pieces() {
                Rational::from((j + 1, m1))
            } else {
                Rational::from(&lab.breaks[i + 1] + &offset)
            };
            breaks.push(x);
            regions.push(*r);
        }
    }
    let labeling = PartitionLabeling::merged(breaks, regions);

    let history = local
        .into_iter()
        .enumerate()
        .map(|(idx, (cells, parents))| {
            let count = cells.len();
            let mut all_cells = Vec::with_capacity(count * m1 as usize);
            let mut all_parents = Vec::with_capacity(count * m1 as usize);
            for j in 0..m1 {
                let offset = Rational::from(&period * j);
                for (c, par) in cells.iter().zip(&parents) {
                    all_cells.push(
                        Interval::new(Rational::from(c.a() + &offset), Rational::from(c.b() + &offset))
                            .expect("shifted cell"),
                    );
                    all_parents.push(*par);
                }
            }
            CellLevel {
                level: idx as u32 + 1,
                cells: all_cells,
                parents: all_parents,
            }
        })
        .collect::<Vec<_>>();
    Ok(Layout {
        labeling,
        history: fix_parent_offsets(history, m1),
        forest: None,
        teeth,
    })
}

/// Shift tooth-local parent indices to indices into the tiled level above.
fn fix_parent_offsets(mut history: Vec<CellLevel>, m1: u64) -> Vec<CellLevel> {
    for idx in 1..history.len() {
        let per_tooth_upper = history[idx - 1].cells.len() / m1 as usize;
        let per_tooth = history[idx].cells.len() / m1 as usize;
        for (i, par) in history[idx].parents.iter_mut().enumerate() {
            let tooth = i / per_tooth;
            if let Some(q) = par {
                *q += tooth * per_tooth_upper;
            }
        }
    }
    history
}

fn build_whitney(p: &BuildParams, t: &SequenceTable, depth: Option<u32>) -> Result<Layout> {
    let n = t.n();
    let m1 = first_teeth(p, t)?;
    guard(3 * m1 as usize, p.max_pieces)?;
    let unit = Interval::new(Rational::new(), Rational::from(1))?;
    let mut lab = first_level(p, t, &unit, m1)?;
    let mut teeth = vec![m1];
    let depth = match depth {
        Some(d) => d,
        None => whitney::depth_for_budget(&Rational::from(n), &p.epsilon)?,
    };
    let mut history = Vec::new();
    let mut forest: Option<WhitneyForest> = None;
    for k in 1..n {
        let omega = cells_of(&lab, Region::H(k));
        let cubes = omega.len() * 2 * CUBES_PER_LAYER as usize * depth as usize;
        let per_cube = 3 * match p.teeth {
            TeethPolicy::Geometric => 1,
            TeethPolicy::Budget { children } | TeethPolicy::Fixed { children, .. } => children as usize,
            TeethPolicy::Schedule { ref children, .. } => children.get(k as usize - 1).copied().unwrap_or(1) as usize,
        };
        guard(lab.pieces() + cubes.saturating_mul(per_cube), p.max_pieces)?;
        match forest.as_mut() {
            None => forest = Some(whitney::decompose(&omega, depth)?),
            Some(f) => f.refine(&omega)?,
        }
        let level = forest.as_ref().unwrap().level(k).clone();
        history.push(CellLevel {
            level: k,
            cells: level.cubes.iter().map(|c| c.interval.clone()).collect(),
            parents: level.cubes.iter().map(|c| c.parent).collect(),
        });
        let mut by_component: Vec<Vec<&Interval>> = vec![Vec::new(); omega.len()];
        for c in &level.cubes {
            by_component[c.component].push(&c.interval);
        }
        let mut component = 0usize;
        let mut max_teeth = 0u64;
        lab = rewrite(&lab, Region::H(k), |_, iv| {
            let [left, right] = [&level.residual[2 * component], &level.residual[2 * component + 1]];
            debug_assert_eq!(left.a(), iv.a());
            let mut breaks = vec![iv.a().clone(), left.b().clone()];
            let mut regions = vec![Region::Error(k)];
            for cube in &by_component[component] {
                let m = child_teeth(p, t, k, &cube.len())?;
                max_teeth = max_teeth.max(m);
                let (b, r) = split_cell(p, t, k, cube, m)?;
                breaks.extend(b.into_iter().skip(1));
                regions.extend(r);
            }
            breaks.push(right.b().clone());
            regions.push(Region::Error(k));
            component += 1;
            Ok((breaks, regions))
        })?;
        teeth.push(max_teeth);
    }
    // The deepest cells: the h^N pieces, one per level-(N-1) cube core.
    let last = cells_of(&lab, Region::H(n));
    let parents = match history.last() {
        None => vec![None; last.len()],
        Some(upper) => last
            .iter()
            .map(|c| {
                let i = upper.cells.partition_point(|u| u.b() <= c.a());
                upper.cells.get(i).filter(|u| u.contains(c)).map(|_| i)
            })
            .collect(),
    };
    history.push(CellLevel {
        level: n,
        cells: last,
        parents,
    });
    Ok(Layout {
        labeling: relabel_last(lab, n),
        history,
        forest,
        teeth,
    })
}

/// Build the construction and audit it; measure discrepancies are fatal.
pub fn build(params: &BuildParams) -> Result<Construction> {
    params.validate()?;
    let table = build_table(params.n)?;
    let layout = match params.refinement {
        Refinement::Nested => build_nested(params, &table)?,
        Refinement::Whitney { depth } => build_whitney(params, &table, depth)?,
    };
    let labeling = layout.labeling;
    let slopes: Vec<Rational> = labeling.regions.iter().map(|r| r.slope(&table)).collect();
    let u = PiecewiseLinear::from_slopes(labeling.breaks.clone(), &slopes, Rational::new(), Rational::new())?;
    let weights = labeling.regions.iter().map(|r| r.weight()).collect();
    let w = Weight::new(PiecewiseConstant::new(labeling.breaks.clone(), weights, Rational::from(1))?)?;
    let mut c = Construction {
        params: params.clone(),
        table,
        labeling,
        u,
        w,
        history: layout.history,
        forest: layout.forest,
        teeth: layout.teeth,
        diagnostics: CheckReport::default(),
    };
    c.diagnostics = audit(&c);
    let measure_failures: Vec<String> = c
        .diagnostics
        .failures()
        .filter(|f| f.name.starts_with("measure"))
        .map(|f| format!("{} ({})", f.name, f.detail))
        .collect();
    if !measure_failures.is_empty() {
        return Err(Error::AuditFailed(measure_failures.join("; ")));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from((n, d))
    }

    #[test]
    fn region_labels_round_trip() {
        for r in [Region::B, Region::G(3), Region::H(2), Region::Error(1), Region::Exterior] {
            assert_eq!(r.to_string().parse::<Region>().unwrap(), r);
        }
        assert!("G0".parse::<Region>().is_err());
        assert!("Q1".parse::<Region>().is_err());
    }

    #[test]
    fn single_level_single_tooth() {
        let mut p = BuildParams::new(1);
        p.teeth = TeethPolicy::Fixed { first: 1, children: 1 };
        let c = build(&p).unwrap();
        let lab = c.labeling();
        assert_eq!(lab.regions(), &[Region::B, Region::G(1), Region::B]);
        assert_eq!(lab.breaks(), &[q(0, 1), q(3, 8), q(5, 8), q(1, 1)]);
        assert_eq!(c.u().nodes(), &[q(0, 1), q(1, 4), q(-1, 4), q(0, 1)]);
        assert_eq!(c.w().values(), &[q(1, 1), q(1, 2), q(1, 1)]);
    }

    #[test]
    fn default_epsilon_rounds_up() {
        assert_eq!(BuildParams::default_epsilon(4, 3.0), pow2(-18));
        assert_eq!(BuildParams::default_epsilon(4, 2.5), pow2(-15));
    }

    #[test]
    fn rejects_large_epsilon() {
        let mut p = BuildParams::new(4);
        p.epsilon = pow2(-10);
        assert!(matches!(p.validate(), Err(Error::InvalidParameter(_))));
        p.epsilon = pow2(-15);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn piece_guard_trips() {
        let mut p = BuildParams::new(6);
        p.max_pieces = 50;
        assert!(matches!(build(&p), Err(Error::TooManyPieces { .. })));
    }

    #[test]
    fn nested_build_passes_audit() {
        for n in 1..=6 {
            let c = build(&BuildParams::new(n)).unwrap();
            assert!(c.diagnostics().all_passed(), "n={n}: {}", c.diagnostics().failure_summary());
        }
    }

    #[test]
    fn whitney_build_passes_audit() {
        let mut p = BuildParams::new(2);
        p.delta = q(1, 8);
        p.refinement = Refinement::Whitney { depth: None };
        let c = build(&p).unwrap();
        assert!(c.diagnostics().all_passed(), "{}", c.diagnostics().failure_summary());
        assert!(c.forest().is_some());
        assert!(c.labeling().measure(Region::Error(1)) > 0);
    }
}
