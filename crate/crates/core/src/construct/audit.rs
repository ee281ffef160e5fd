//! Exact post-build checks of a construction.

use rug::Rational;

use super::{Construction, Region};
use crate::checks::CheckReport;
use crate::geometry::{joint_pieces, Interval};
use crate::scalar::pow2;

pub type DiagnosticsReport = CheckReport;

/// Cells checked per level for the level-set bounds.
const SAMPLED_CELLS: usize = 256;

fn sample(len: usize) -> impl Iterator<Item = usize> {
    let take = len.min(SAMPLED_CELLS);
    (0..take).map(move |i| i * len / take)
}

/// Checks whose names start with `measure` are the ones `build` treats as fatal.
pub fn audit(c: &Construction) -> DiagnosticsReport {
    let mut rep = CheckReport::default();
    let t = &c.table;
    let n = t.n();
    let eps = &c.params.epsilon;
    let lab = &c.labeling;
    let one = Rational::from(1);

    rep.push(
        "tiling covers [0, 1]",
        lab.breaks.first() == Some(&Rational::new()) && lab.breaks.last() == Some(&one),
        format!("{} pieces", lab.pieces()),
    );
    let transient = lab.regions.iter().filter(|r| matches!(r, Region::H(_))).count();
    rep.push("no transient labels", transient == 0, format!("{transient} pieces"));

    let measures = lab.measures();
    let get = |r: Region| measures.get(&r).cloned().unwrap_or_default();
    let slack = Rational::from(1) - eps;
    for k in 1..=n {
        let g = get(Region::G(k));
        let lo = Rational::from(t.mu(k) * &slack);
        rep.push(
            format!("measure |G_{k}| in [mu_k (1 - eps), mu_k]"),
            g >= lo && &g <= t.mu(k),
            format!("{g} vs {}", t.mu(k)),
        );
    }
    rep.push_eq("measure |B| = beta_N", &get(Region::B), t.beta());
    let error: Rational = measures
        .iter()
        .filter(|(r, _)| matches!(r, Region::Error(_)))
        .map(|(_, m)| m.clone())
        .sum();
    rep.push_le("measure |error| <= eps", &error, eps);
    let total: Rational = measures.values().cloned().sum();
    rep.push_eq("measure total = 1", &total, &one);

    let mut bad_slope = None;
    let mut bad_weight = None;
    let du = c.u.derivative();
    let unit = Interval::new(Rational::new(), one.clone()).expect("unit interval");
    let (cuts, values) = joint_pieces(&[&c.w, &du], &unit);
    let mut j = 0;
    for (i, (piece, v)) in cuts.windows(2).zip(&values).enumerate() {
        while lab.breaks[j + 1] <= piece[0] {
            j += 1;
        }
        let r = lab.regions[j];
        if v[1] != r.slope(t) && bad_slope.is_none() {
            bad_slope = Some(i);
        }
        if v[0] != r.weight() && bad_weight.is_none() {
            bad_weight = Some(i);
        }
    }
    rep.push("u' matches labels", bad_slope.is_none(), format!("first mismatch {bad_slope:?}"));
    rep.push("w matches labels", bad_weight.is_none(), format!("first mismatch {bad_weight:?}"));

    rep.push_le("sup |u| <= delta", &c.u.sup_norm(), &c.params.delta);
    rep.push_eq("u(0) = 0", &c.u.value_at(&Rational::new()), &Rational::new());
    rep.push_eq("u(1) = 0", &c.u.value_at(&one), &Rational::new());
    rep.push_eq("u = 0 outside [0, 1]", c.u.exterior(), &Rational::new());
    rep.push_eq("w = 1 outside [0, 1]", c.w.exterior(), &one);
    rep.push("u continuous", c.u.extends_continuously(), "");

    for level in &c.history {
        let k = level.level;
        let cap = pow2(-(k as i64));
        let mut over_weight = 0usize;
        let mut over_level = Vec::new();
        for i in sample(level.cells.len()) {
            let cell = &level.cells[i];
            let len = cell.len();
            let inside = lab.measures_in(cell);
            if inside.keys().any(|r| r.weight() > cap) {
                over_weight += 1;
            }
            for j in k..=n {
                let at_j: Rational = inside
                    .iter()
                    .filter(|(r, _)| r.weight() == pow2(-(j as i64)))
                    .map(|(_, m)| m.clone())
                    .sum();
                let bound = Rational::from(t.mu(j) / t.alpha(k)) * &len * Rational::from(&one + eps);
                if at_j > bound {
                    over_level.push((i, j));
                }
            }
        }
        rep.push(
            format!("w <= 2^-{k} on level-{k} cells"),
            over_weight == 0,
            format!("{over_weight} violating cells"),
        );
        rep.push(
            format!("level sets inside level-{k} cells"),
            over_level.is_empty(),
            format!("violations (cell, j): {:?}", &over_level[..over_level.len().min(5)]),
        );
        let nested = level.parents.iter().zip(&level.cells).all(|(p, cell)| match (k, p) {
            (1, None) => true,
            (_, Some(q)) => c.history[k as usize - 2].cells.get(*q).is_some_and(|u| u.contains(cell)),
            _ => false,
        });
        rep.push(format!("level-{k} cells nest"), nested, "");
    }

    if let Some(f) = &c.forest {
        rep.push("Whitney sizing", f.sizing_holds(), "");
        rep.push("Whitney nesting", f.nesting_holds(), "");
    }
    rep
}
