//! Muckenhoupt characteristic `sup_Q (avg_Q w)(avg_Q w^{-1/(r-1)})^{r-1}` of
//! piecewise-constant weights on the line.
//!
//! The search is a branch and bound over pairs of piece ranges holding the
//! two endpoints. A node's upper envelope bounds each average separately: the
//! part of `Q` inside a range is at most `min(max * t, mass of the range)`,
//! and the resulting linear-fractional bound peaks at grid vertices. Leaves
//! (one piece per endpoint) are searched on a grid plus golden-section passes.
//! The best value found is a certified lower bound on the supremum.

use rayon::prelude::*;
use rug::ops::Pow;
use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Interval, PiecewiseConstant, Weight};
use crate::json;
use crate::scalar::{power, rational_from_f64, Precision, Scalar};
use crate::sequences::SequenceTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub window: Interval,
    /// Grid points per free endpoint in a leaf.
    pub grid: usize,
    /// Coordinate-wise golden-section rounds after the grid.
    pub golden_passes: usize,
    pub golden_iterations: usize,
    /// Nodes whose envelope is within this relative margin of the best are dropped.
    pub tolerance: f64,
    /// Breakpoint pairs `(x_i, x_j)` with `j - i <=` this seed the search.
    pub seed_span: usize,
    /// Nodes expanded serially before the parallel phase.
    pub frontier: usize,
    /// Fixed number of independent work units; results do not depend on threads.
    pub chunks: usize,
    /// Widest interval on the auxiliary grid beyond the window.
    pub wide_width: u32,
    pub prec: Precision,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            window: Interval::from_ratios((-1, 1), (2, 1)).unwrap(),
            grid: 9,
            golden_passes: 3,
            golden_iterations: 30,
            tolerance: 1e-9,
            seed_span: 8,
            frontier: 4096,
            chunks: 64,
            wide_width: 8,
            prec: Precision::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArReport {
    pub r: f64,
    /// `Φ` at `argmax`, evaluated at `prec` bits from exact endpoints.
    #[serde(with = "json::float")]
    pub sup_estimate: Float,
    /// The same value as seen by the double-precision search.
    pub search_value: f64,
    pub argmax: Interval,
    pub candidates: u64,
    pub nodes: u64,
    pub pruned: u64,
    pub refinement_passes: usize,
    #[serde(with = "json::float_opt")]
    pub theoretical_bound: Option<Float>,
    pub window: Interval,
    /// Best value on the coarse grid of intervals wider than the window.
    pub wide_max: f64,
    pub pieces: usize,
    pub kind: String,
}

impl ArReport {
    pub const CSV_HEADER: &'static str = "r,sup_estimate,argmax_a,argmax_b,candidates,nodes,pruned,theoretical_bound,wide_max";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{:e}",
            self.r,
            self.sup_estimate.to_f64(),
            self.argmax.a().to_f64(),
            self.argmax.b().to_f64(),
            self.candidates,
            self.nodes,
            self.pruned,
            self.theoretical_bound.as_ref().map(|b| b.to_f64().to_string()).unwrap_or_default(),
            self.wide_max,
        )
    }
}

/// Range minimum/maximum in O(1).
struct Sparse {
    max: Vec<Vec<f64>>,
    min: Vec<Vec<f64>>,
}

impl Sparse {
    fn new(v: &[f64]) -> Self {
        let mut max = vec![v.to_vec()];
        let mut min = vec![v.to_vec()];
        let mut span = 1;
        while 2 * span <= v.len() {
            let (pm, pn) = (max.last().unwrap(), min.last().unwrap());
            let nm: Vec<f64> = (0..=v.len() - 2 * span).map(|i| pm[i].max(pm[i + span])).collect();
            let nn: Vec<f64> = (0..=v.len() - 2 * span).map(|i| pn[i].min(pn[i + span])).collect();
            max.push(nm);
            min.push(nn);
            span *= 2;
        }
        Sparse { max, min }
    }

    /// Inclusive range `lo..=hi`.
    fn query(&self, lo: usize, hi: usize) -> (f64, f64) {
        let k = (usize::BITS - 1 - (hi - lo + 1).leading_zeros()) as usize;
        let j = hi + 1 - (1 << k);
        (
            self.min[k][lo].min(self.min[k][j]),
            self.max[k][lo].max(self.max[k][j]),
        )
    }
}

/// The weight restricted to the window, in doubles.
struct Problem {
    xs: Vec<f64>,
    vw: Vec<f64>,
    vs: Vec<f64>,
    sw: Vec<f64>,
    ss: Vec<f64>,
    range: Sparse,
    rm1: f64,
    gamma: f64,
}

#[derive(Clone, Copy, Debug)]
struct Node {
    i0: u32,
    i1: u32,
    j0: u32,
    j1: u32,
}

#[derive(Clone, Copy, Debug, Default)]
struct Best {
    value: f64,
    a: f64,
    b: f64,
}

impl Best {
    fn offer(&mut self, value: f64, a: f64, b: f64) {
        if value > self.value {
            *self = Best { value, a, b };
        }
    }
}

#[derive(Default)]
struct Tally {
    candidates: u64,
    nodes: u64,
    pruned: u64,
}

fn golden_max(lo: f64, hi: f64, iters: usize, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (lo, hi);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

impl Problem {
    fn new(w: &PiecewiseConstant, r: &Rational, window: &Interval, prec: Precision) -> Result<Self> {
        let mut xs_exact = vec![window.a().clone()];
        xs_exact.extend(w.breaks().iter().filter(|x| *x > window.a() && *x < window.b()).cloned());
        xs_exact.push(window.b().clone());
        let weight = Weight::new(w.clone())?;
        let rm1 = Rational::from(r - 1u32);
        let gamma = Scalar::exact(-rm1.clone().recip());
        let tw = weight.prefix_table(&Scalar::exact(1), prec);
        let ts = weight.prefix_table(&gamma, prec);
        let mids: Vec<Rational> = xs_exact
            .windows(2)
            .map(|p| Rational::from(&p[0] + &p[1]) / 2u32)
            .collect();
        let vw: Vec<f64> = mids.iter().map(|m| w.value_at(m).to_f64()).collect();
        let gamma_f = gamma.to_f64();
        let vs: Vec<f64> = mids
            .iter()
            .map(|m| power(w.value_at(m), &gamma, prec).to_f64())
            .collect();
        // Prefix sums relative to the window start keep magnitudes small.
        let origin_w = tw.at(window.a());
        let origin_s = ts.at(window.a());
        let rel = |s: Scalar, o: &Scalar| match (s, o) {
            (Scalar::Exact(s), Scalar::Exact(o)) => Rational::from(&s - o).to_f64(),
            (s, o) => (s.to_float(prec) - o.to_float(prec)).to_f64(),
        };
        let sw = xs_exact.iter().map(|x| rel(tw.at(x), &origin_w)).collect();
        let ss = xs_exact.iter().map(|x| rel(ts.at(x), &origin_s)).collect();
        Ok(Problem {
            xs: xs_exact.iter().map(|x| x.to_f64()).collect(),
            range: Sparse::new(&vw),
            vw,
            vs,
            sw,
            ss,
            rm1: rm1.to_f64(),
            gamma: gamma_f,
        })
    }

    fn pieces(&self) -> usize {
        self.vw.len()
    }

    fn phi(&self, iw: f64, is: f64, len: f64) -> f64 {
        (iw / len) * (is / len).powf(self.rm1)
    }

    /// `Φ` on `[x_i, x_j]`.
    fn phi_breaks(&self, i: usize, j: usize) -> f64 {
        let len = self.xs[j] - self.xs[i];
        self.phi(self.sw[j] - self.sw[i], self.ss[j] - self.ss[i], len)
    }

    fn bound(&self, n: &Node) -> f64 {
        let (i0, i1, j0, j1) = (n.i0 as usize, n.i1 as usize, n.j0 as usize, n.j1 as usize);
        let (lo, hi) = self.range.query(i0, j1);
        let oscillation = hi / lo;
        if i0 == j0 {
            return oscillation;
        }
        let c = self.xs[j0] - self.xs[i1 + 1];
        let wl = self.xs[i1 + 1] - self.xs[i0];
        let wr = self.xs[j1 + 1] - self.xs[j0];
        let (lmin, lmax) = self.range.query(i0, i1);
        let (rmin, rmax) = self.range.query(j0, j1);
        let avg = |sc: f64, m1: f64, mass1: f64, m2: f64, mass2: f64| {
            let t1s = [0.0, (mass1 / m1).min(wl), wl];
            let t2s = [0.0, (mass2 / m2).min(wr), wr];
            let mut best = 0.0f64;
            for &t1 in &t1s {
                for &t2 in &t2s {
                    let den = c + t1 + t2;
                    let v = if den <= 0.0 {
                        m1.max(m2)
                    } else {
                        (sc + (m1 * t1).min(mass1) + (m2 * t2).min(mass2)) / den
                    };
                    best = best.max(v);
                }
            }
            best
        };
        let aw = avg(
            self.sw[j0] - self.sw[i1 + 1],
            lmax,
            self.sw[i1 + 1] - self.sw[i0],
            rmax,
            self.sw[j1 + 1] - self.sw[j0],
        );
        let as_ = avg(
            self.ss[j0] - self.ss[i1 + 1],
            lmin.powf(self.gamma),
            self.ss[i1 + 1] - self.ss[i0],
            rmin.powf(self.gamma),
            self.ss[j1 + 1] - self.ss[j0],
        );
        oscillation.min(aw * as_.powf(self.rm1))
    }

    fn leaf(&self, i: usize, j: usize, cfg: &SearchConfig, best: &mut Best, tally: &mut Tally) {
        if i == j {
            tally.candidates += 1;
            best.offer(1.0, self.xs[i], self.xs[i + 1]);
            return;
        }
        let li = self.xs[i + 1] - self.xs[i];
        let lj = self.xs[j + 1] - self.xs[j];
        let (vi, si, vj, sj) = (self.vw[i], self.vs[i], self.vw[j], self.vs[j]);
        if j == i + 1 {
            // Φ depends only on the share θ of the left piece.
            let f = |th: f64| self.phi(th * vi + (1.0 - th) * vj, th * si + (1.0 - th) * sj, 1.0);
            let (th, v) = golden_max(0.0, 1.0, 2 * cfg.golden_iterations, f);
            tally.candidates += 2 * cfg.golden_iterations as u64 + 2;
            let s = if th <= 0.0 {
                lj
            } else if th >= 1.0 {
                li
            } else {
                (li / th).min(lj / (1.0 - th))
            };
            best.offer(v, self.xs[j] - th * s, self.xs[j] + (1.0 - th) * s);
            return;
        }
        let c = self.xs[j] - self.xs[i + 1];
        let scw = self.sw[j] - self.sw[i + 1];
        let scs = self.ss[j] - self.ss[i + 1];
        let f = |t1: f64, t2: f64| self.phi(scw + vi * t1 + vj * t2, scs + si * t1 + sj * t2, c + t1 + t2);
        let k = cfg.grid.max(2);
        let (mut bt1, mut bt2, mut bv) = (0.0, 0.0, f64::NEG_INFINITY);
        for a in 0..k {
            let t1 = li * a as f64 / (k - 1) as f64;
            for b in 0..k {
                let t2 = lj * b as f64 / (k - 1) as f64;
                let v = f(t1, t2);
                if v > bv {
                    (bt1, bt2, bv) = (t1, t2, v);
                }
            }
        }
        tally.candidates += (k * k) as u64;
        for _ in 0..cfg.golden_passes {
            let (t1, v1) = golden_max(0.0, li, cfg.golden_iterations, |t| f(t, bt2));
            if v1 > bv {
                (bt1, bv) = (t1, v1);
            }
            let (t2, v2) = golden_max(0.0, lj, cfg.golden_iterations, |t| f(bt1, t));
            if v2 > bv {
                (bt2, bv) = (t2, v2);
            }
            tally.candidates += 2 * (cfg.golden_iterations as u64 + 2);
        }
        best.offer(bv, self.xs[i + 1] - bt1, self.xs[j] + bt2);
    }

    fn split(n: &Node, out: &mut Vec<Node>) {
        let mid = |lo: u32, hi: u32| lo + (hi - lo) / 2;
        if n.i0 == n.j0 {
            let m = mid(n.i0, n.i1);
            out.push(Node { i0: n.i0, i1: m, j0: n.i0, j1: m });
            out.push(Node { i0: m + 1, i1: n.i1, j0: m + 1, j1: n.i1 });
            out.push(Node { i0: n.i0, i1: m, j0: m + 1, j1: n.i1 });
        } else if n.i1 - n.i0 >= n.j1 - n.j0 {
            let m = mid(n.i0, n.i1);
            out.push(Node { i1: m, ..*n });
            out.push(Node { i0: m + 1, ..*n });
        } else {
            let m = mid(n.j0, n.j1);
            out.push(Node { j1: m, ..*n });
            out.push(Node { j0: m + 1, ..*n });
        }
    }

    fn is_leaf(n: &Node) -> bool {
        n.i0 == n.i1 && n.j0 == n.j1
    }

    /// Process one node: returns children to explore, if any.
    fn step(&self, n: &Node, cfg: &SearchConfig, best: &mut Best, tally: &mut Tally, out: &mut Vec<Node>) {
        tally.nodes += 1;
        let bound = self.bound(n) * (1.0 + 1e-9);
        if bound <= best.value * (1.0 + cfg.tolerance) {
            tally.pruned += 1;
            return;
        }
        if Self::is_leaf(n) {
            self.leaf(n.i0 as usize, n.j0 as usize, cfg, best, tally);
        } else {
            Self::split(n, out);
        }
    }

    fn depth_first(&self, start: Vec<Node>, cfg: &SearchConfig, mut best: Best) -> (Best, Tally) {
        let mut tally = Tally::default();
        let mut stack = start;
        stack.reverse();
        let mut children = Vec::with_capacity(3);
        while let Some(n) = stack.pop() {
            children.clear();
            self.step(&n, cfg, &mut best, &mut tally, &mut children);
            stack.extend(children.drain(..).rev());
        }
        (best, tally)
    }

    /// `∫_{-∞}^x` relative to the window start, extended through the exterior.
    fn cumulative(&self, s: &[f64], v: &[f64], x: f64, exterior: f64) -> f64 {
        let m = self.pieces();
        if x <= self.xs[0] {
            return (x - self.xs[0]) * exterior;
        }
        if x >= self.xs[m] {
            return s[m] + (x - self.xs[m]) * exterior;
        }
        let i = self.xs.partition_point(|b| *b <= x) - 1;
        s[i] + (x - self.xs[i]) * v[i]
    }

    /// Coarse grid of intervals wider than the window, up to `width`.
    fn wide(&self, width: u32, ext_w: f64, best: &mut Best, tally: &mut Tally) {
        let span = self.xs[self.pieces()] - self.xs[0];
        let ext_s = ext_w.powf(self.gamma);
        let steps = 64;
        for wi in 0..=16 {
            let len = span + (width as f64 - span).max(0.0) * wi as f64 / 16.0;
            for ai in 0..=steps {
                let a = self.xs[0] - (len - span) * ai as f64 / steps as f64;
                let b = a + len;
                let iw = self.cumulative(&self.sw, &self.vw, b, ext_w) - self.cumulative(&self.sw, &self.vw, a, ext_w);
                let is = self.cumulative(&self.ss, &self.vs, b, ext_s) - self.cumulative(&self.ss, &self.vs, a, ext_s);
                tally.candidates += 1;
                best.offer(self.phi(iw, is, len), a, b);
            }
        }
    }
}

/// `Φ(Q)` at `prec` bits (exact averages, one rounding for the power).
pub fn phi_exact(w: &Weight, q: &Interval, r: &Rational, prec: Precision) -> Float {
    let rm1 = Rational::from(r - 1u32);
    let gamma = Scalar::exact(-rm1.clone().recip());
    let len = Float::with_val(prec.bits(), q.len());
    let aw = w.power_integral(q, &Scalar::exact(1), prec).to_float(prec) / &len;
    let as_ = w.power_integral(q, &gamma, prec).to_float(prec) / &len;
    aw * as_.pow(Float::with_val(prec.bits(), &rm1))
}

/// Search estimate of `[w]_{A_r}` on `cfg.window`.
pub fn ar_characteristic(w: &PiecewiseConstant, r: f64, cfg: &SearchConfig) -> Result<ArReport> {
    if !(r.is_finite() && r > 1.0) {
        return Err(Error::InvalidParameter(format!("A_r needs r > 1, got {r}")));
    }
    let weight = Weight::new(w.clone())?;
    let r_exact = rational_from_f64(r)?;
    let pb = Problem::new(w, &r_exact, &cfg.window, cfg.prec)?;
    let m = pb.pieces();
    let mut best = Best::default();
    let mut tally = Tally::default();

    for i in 0..m {
        for j in i + 1..=(i + cfg.seed_span).min(m) {
            tally.candidates += 1;
            best.offer(pb.phi_breaks(i, j), pb.xs[i], pb.xs[j]);
        }
    }
    let ext = w.exterior().to_f64();
    let mut wide = Best::default();
    pb.wide(cfg.wide_width, ext, &mut wide, &mut tally);
    let wide_max = wide.value;
    best.offer(wide.value, wide.a, wide.b);

    // Serial breadth-first expansion to a fixed frontier, then independent chunks.
    let last = (m - 1) as u32;
    let mut frontier = std::collections::VecDeque::from([Node { i0: 0, i1: last, j0: 0, j1: last }]);
    let mut children = Vec::new();
    while frontier.len() < cfg.frontier {
        let Some(n) = frontier.pop_front() else { break };
        children.clear();
        pb.step(&n, cfg, &mut best, &mut tally, &mut children);
        frontier.extend(children.drain(..));
    }
    let frontier: Vec<Node> = frontier.into();
    let chunk_len = frontier.len().div_ceil(cfg.chunks.max(1)).max(1);
    let seed = best;
    let results: Vec<(Best, Tally)> = frontier
        .par_chunks(chunk_len)
        .map(|chunk| pb.depth_first(chunk.to_vec(), cfg, seed))
        .collect();
    for (b, t) in results {
        if b.value > best.value {
            best = b;
        }
        tally.candidates += t.candidates;
        tally.nodes += t.nodes;
        tally.pruned += t.pruned;
    }

    let a = rational_from_f64(best.a)?;
    let b = rational_from_f64(best.b)?;
    let argmax = if a < b {
        Interval::new(a, b)?
    } else {
        cfg.window.clone()
    };
    let sup = phi_exact(&weight, &argmax, &r_exact, cfg.prec);
    Ok(ArReport {
        r,
        sup_estimate: sup,
        search_value: best.value,
        argmax,
        candidates: tally.candidates,
        nodes: tally.nodes,
        pruned: tally.pruned,
        refinement_passes: cfg.golden_passes,
        theoretical_bound: None,
        window: cfg.window.clone(),
        wide_max,
        pieces: m,
        kind: "certified lower bound; heuristic supremum".into(),
    })
}

/// Explicit majorant for the constructed weights, `r > 2`: the maximum of
/// the infinite-depth case bounds, their depth-`N` versions with the table's
/// own measures, and 1.
pub fn theoretical_bound(r: f64, table: &SequenceTable, prec: Precision) -> Result<Float> {
    if !(r.is_finite() && r > 2.0) {
        return Err(Error::InvalidParameter(format!(
            "the majorant series diverges unless r > 2, got {r}"
        )));
    }
    let bits = prec.bits();
    let rm1 = Float::with_val(bits, rational_from_f64(r - 1.0)?);
    let e = Float::with_val(bits, 1) / &rm1;
    // q = 2^{(2-r)/(r-1)} = 2^{1/(r-1) - 1}
    let q = Float::with_val(bits, 2).pow(Float::with_val(bits, &e - 1u32));
    let one_minus_q = Float::with_val(bits, 1) - &q;
    let case1 = (Float::with_val(bits, 1) - Float::with_val(bits, 2) * one_minus_q.clone().ln()).pow(&rm1);
    let case2 = (Float::with_val(bits, 2) / &one_minus_q).pow(&rm1);
    let mut out = Float::with_val(bits, 1);
    out = out.max(&case1).max(&case2);

    let n = table.n();
    let two_e = |k: u32| Float::with_val(bits, 2).pow(Float::with_val(bits, &e * k));
    let mut s1 = Float::with_val(bits, 0);
    for k in 1..=n {
        s1 += Float::with_val(bits, Rational::from(table.mu(k) / table.alpha(1))) * two_e(k);
    }
    let case1n = (Float::with_val(bits, 1) + Float::with_val(bits, 2) * s1).pow(&rm1);
    out = out.max(&case1n);
    for j in 1..=n {
        let mut s = Float::with_val(bits, 0);
        for k in j..=n {
            s += Float::with_val(bits, Rational::from(table.mu(k) / table.alpha(j))) * two_e(k - j);
        }
        out = out.max(&(Float::with_val(bits, 2) * s).pow(&rm1));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingRow {
    pub probe: Interval,
    #[serde(with = "json::rational")]
    pub ratio: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub rows: Vec<DoublingRow>,
    #[serde(with = "json::rational")]
    pub worst: Rational,
    /// `2^r` times the characteristic estimate.
    #[serde(with = "json::float")]
    pub limit: Float,
    pub passed: bool,
}

/// Exact `∫_{2Q} w / ∫_Q w` for every probe against `2^r [w]_{A_r}`.
pub fn doubling_check(w: &PiecewiseConstant, r: f64, estimate: &Float, probes: &[Interval]) -> Result<DoublingReport> {
    let prec = Precision::new(estimate.prec().max(Precision::default().bits()))?;
    let two = Rational::from(2);
    let rows: Vec<DoublingRow> = probes
        .iter()
        .map(|q| DoublingRow {
            probe: q.clone(),
            ratio: w.integral(&q.dilate(&two)) / w.integral(q),
        })
        .collect();
    let worst = rows.iter().map(|r| r.ratio.clone()).max().unwrap_or_default();
    let limit = Float::with_val(prec.bits(), 2).pow(Float::with_val(prec.bits(), rational_from_f64(r)?)) * estimate;
    let passed = rows.iter().all(|row| Float::with_val(prec.bits(), &row.ratio) <= limit);
    Ok(DoublingReport {
        rows,
        worst,
        limit,
        passed,
    })
}
