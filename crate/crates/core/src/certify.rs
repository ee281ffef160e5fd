//! Forcing field, distributional residual and the blow-up certificate.
//!
//! With `wF := wu' + 1` the pair `(u, F)` solves `(w u')' = (w F)'` on
//! `(0, 1)`, while `∫ w^s |u'|^p` outgrows `∫ w^s |F|^p` as the depth grows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rug::{Float, Rational};
use serde::{Deserialize, Serialize};

use crate::construct::{build, BuildParams, Construction, Region};
use crate::error::{Error, Result};
use crate::geometry::{joint_pieces, Interval, PiecewiseConstant, PiecewiseLinear};
use crate::json;
use crate::muckenhoupt::{ar_characteristic, SearchConfig};
use crate::scalar::{format_float, pow2, power, Precision, Scalar};

fn unit() -> Interval {
    Interval::new(Rational::new(), Rational::from(1)).expect("unit interval")
}

/// `F = u' + 1/w` on the common refinement; 1 outside `[0, 1]`.
pub fn forcing_for(u: &PiecewiseLinear, w: &PiecewiseConstant) -> Result<PiecewiseConstant> {
    let du = u.derivative();
    let (cuts, values) = joint_pieces(&[&du, w], &u.window());
    let f = values
        .into_iter()
        .map(|v| Rational::from(&v[0] + v[1].clone().recip()))
        .collect();
    let exterior = Rational::from(du.exterior() + w.exterior().clone().recip());
    PiecewiseConstant::new(cuts, f, exterior)
}

pub fn make_forcing(c: &Construction) -> PiecewiseConstant {
    forcing_for(c.u(), c.w()).expect("construction pieces are valid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatTest {
    #[serde(with = "json::rational")]
    pub center: Rational,
    #[serde(with = "json::rational")]
    pub half_width: Rational,
    /// `∫ (w u' - w F) φ'`.
    #[serde(with = "json::rational")]
    pub residual: Rational,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub pieces: usize,
    /// Distinct values of `w u' - w F` on `(0, 1)`; exactly `[-1]` for a solution.
    #[serde(with = "json::rational_vec")]
    pub flux_values: Vec<Rational>,
    pub tests: Vec<HatTest>,
    #[serde(with = "json::rational")]
    pub max_residual: Rational,
    pub passed: bool,
}

/// Exact check of `(w u')' = (w F)'` on `(0, 1)`: the flux `w u' - w F` must be
/// the constant -1 on every piece, and `test_count` random dyadic hats must
/// integrate against it to zero.
pub fn pde_residual(
    u: &PiecewiseLinear,
    w: &PiecewiseConstant,
    f: &PiecewiseConstant,
    test_count: usize,
    seed: u64,
) -> ResidualReport {
    let du = u.derivative();
    let (cuts, values) = joint_pieces(&[w, &du, f], &unit());
    let flux: Vec<Rational> = values
        .iter()
        .map(|v| Rational::from(&v[0] * &v[1]) - Rational::from(&v[0] * &v[2]))
        .collect();
    let mut flux_values = flux.clone();
    flux_values.sort();
    flux_values.dedup();
    let g = PiecewiseConstant::new(cuts, flux, Rational::new()).expect("refinement of valid pieces");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tests: Vec<HatTest> = (0..test_count)
        .map(|_| {
            let depth: i64 = rng.gen_range(1..=24);
            let odd: u64 = 2 * rng.gen_range(0..(1u64 << (depth - 1))) + 1;
            let center = Rational::from(odd) * pow2(-depth);
            let half_width = pow2(-rng.gen_range(depth + 1..=depth + 12));
            let left = Interval::new(Rational::from(&center - &half_width), center.clone()).unwrap();
            let right = Interval::new(center.clone(), Rational::from(&center + &half_width)).unwrap();
            // φ' = 1/h on the left half and -1/h on the right half.
            let residual = (g.integral(&left) - g.integral(&right)) / &half_width;
            HatTest {
                center,
                half_width,
                residual,
            }
        })
        .collect();
    let max_residual = tests.iter().map(|t| t.residual.clone().abs()).max().unwrap_or_default();
    let passed = flux_values == [Rational::from(-1)] && max_residual == 0;
    ResidualReport {
        pieces: g.pieces(),
        flux_values,
        tests,
        max_residual,
        passed,
    }
}

/// `lhs / rhs`, with the degenerate cases kept apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ratio {
    Finite {
        #[serde(with = "json::float")]
        value: Float,
    },
    Infinite,
    /// `0 / 0`.
    Undefined,
}

impl Ratio {
    pub fn new(num: &Scalar, den: &Scalar, prec: Precision) -> Ratio {
        match (num.is_zero(), den.is_zero()) {
            (true, true) => Ratio::Undefined,
            (false, true) => Ratio::Infinite,
            _ => Ratio::Finite {
                value: num.to_float(prec) / den.to_float(prec),
            },
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Ratio::Finite { value: x } => x.to_f64(),
            Ratio::Infinite => f64::INFINITY,
            Ratio::Undefined => f64::NAN,
        }
    }

    pub fn exceeds(&self, gamma: &Rational) -> bool {
        match self {
            Ratio::Finite { value: x } => *x > *gamma,
            Ratio::Infinite => true,
            Ratio::Undefined => false,
        }
    }

    pub fn render(&self) -> String {
        match self {
            Ratio::Finite { value: x } => format_float(x),
            Ratio::Infinite => "inf".into(),
            Ratio::Undefined => "undefined".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub label: Region,
    #[serde(with = "json::rational")]
    pub measure: Rational,
    #[serde(with = "json::rational")]
    pub w: Rational,
    #[serde(with = "json::rational")]
    pub du: Rational,
    #[serde(with = "json::rational")]
    pub f: Rational,
    /// `|piece| w^s |u'|^p`
    pub lhs: Scalar,
    /// `|piece| w^s |F|^p`
    pub rhs_f: Scalar,
    /// `|piece| w^s`
    pub w_s: Scalar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub n: u32,
    #[serde(with = "json::rational")]
    pub p: Rational,
    #[serde(with = "json::rational")]
    pub s: Rational,
    pub prec: u32,
    pub lhs: Scalar,
    pub rhs_f: Scalar,
    pub rhs_u: Scalar,
    pub ratio: Ratio,
    pub ledger: Vec<LedgerRow>,
    /// Part of `lhs` and `rhs_f` coming from the error set.
    pub error_lhs: Scalar,
    pub error_rhs_f: Scalar,
    /// `ε 2^{(N+1)p}`, the ceiling for `error_rhs_f`.
    pub quarantine_bound: Scalar,
    pub quarantine_ok: bool,
    /// `|B| b^p + Σ |G_k| 2^{k(p-s)}` from the audited measures and the table.
    pub closed_form: Scalar,
    #[serde(with = "json::float")]
    pub closed_form_rel_err: Float,
    #[serde(with = "json::rational_opt")]
    pub gamma: Option<Rational>,
    pub pass: Option<bool>,
}

fn check_exponents(p: &Rational, s: &Rational) -> Result<()> {
    if *p < 2 {
        return Err(Error::InvalidParameter(format!("p must be at least 2, got {p}")));
    }
    if *s < 1 {
        return Err(Error::InvalidParameter(format!("s must be at least 1, got {s}")));
    }
    Ok(())
}

/// `|piece| w^s |g|^p`.
pub(crate) fn weighted_term(len: &Rational, w: &Rational, g: &Rational, p: &Scalar, s: &Scalar, prec: Precision) -> Scalar {
    let g_abs = g.clone().abs();
    if g_abs == 0 {
        return Scalar::exact(0);
    }
    power(w, s, prec)
        .mul(&power(&g_abs, p, prec), prec)
        .mul(&Scalar::Exact(len.clone()), prec)
}

/// Both sides of the blow-up inequality on `(0, 1)`, grouped by label.
pub fn blowup_ratio(
    c: &Construction,
    p: &Rational,
    s: &Rational,
    gamma: Option<&Rational>,
    prec: Precision,
) -> Result<CertificateReport> {
    check_exponents(p, s)?;
    let f = make_forcing(c);
    let du = c.u().derivative();
    let lab = c.labeling();
    let (cuts, values) = joint_pieces(&[c.w(), &du, &f], &unit());
    let mut groups: BTreeMap<(Region, Rational, Rational, Rational), Rational> = BTreeMap::new();
    let mut j = 0;
    for (piece, v) in cuts.windows(2).zip(values) {
        while lab.breaks()[j + 1] <= piece[0] {
            j += 1;
        }
        let [w, d, fv]: [Rational; 3] = v.try_into().expect("three fields");
        *groups.entry((lab.regions()[j], w, d, fv)).or_default() += Rational::from(&piece[1] - &piece[0]);
    }
    let (ps, ss) = (Scalar::Exact(p.clone()), Scalar::Exact(s.clone()));
    let one = Rational::from(1);
    let ledger: Vec<LedgerRow> = groups
        .into_iter()
        .map(|((label, w, d, fv), measure)| LedgerRow {
            lhs: weighted_term(&measure, &w, &d, &ps, &ss, prec),
            rhs_f: weighted_term(&measure, &w, &fv, &ps, &ss, prec),
            w_s: weighted_term(&measure, &w, &one, &ps, &ss, prec),
            label,
            measure,
            w,
            du: d,
            f: fv,
        })
        .collect();
    let lhs = Scalar::sum(ledger.iter().map(|r| &r.lhs), prec);
    let rhs_f = Scalar::sum(ledger.iter().map(|r| &r.rhs_f), prec);
    let w_s = Scalar::sum(ledger.iter().map(|r| &r.w_s), prec);
    let rhs_u = power(&c.u().sup_norm(), &ps, prec).mul(&w_s, prec);
    let ratio = Ratio::new(&lhs, &rhs_f.add(&rhs_u, prec), prec);

    let is_error = |r: &&LedgerRow| matches!(r.label, Region::Error(_));
    let error_lhs = Scalar::sum(ledger.iter().filter(is_error).map(|r| &r.lhs), prec);
    let error_rhs_f = Scalar::sum(ledger.iter().filter(is_error).map(|r| &r.rhs_f), prec);
    let n = c.table().n();
    let growth = power(&Rational::from(2), &Scalar::Exact(p.clone() * (n + 1)), prec);
    let quarantine_bound = growth.mul(&Scalar::Exact(c.params().epsilon.clone()), prec);
    let quarantine_ok = error_rhs_f.to_float(prec) <= quarantine_bound.to_float(prec);

    // Independent prediction from the table and the audited label measures.
    let t = c.table();
    let measures = lab.measures();
    let measure = |r: Region| Scalar::Exact(measures.get(&r).cloned().unwrap_or_default());
    let mut terms = vec![measure(Region::B).mul(&power(t.b(), &ps, prec), prec)];
    for k in 1..=n {
        let e = Scalar::Exact(Rational::from(p - s) * k);
        terms.push(measure(Region::G(k)).mul(&power(&Rational::from(2), &e, prec), prec));
    }
    let closed_form = Scalar::sum(terms.iter(), prec);
    let main = lhs.to_float(prec) - error_lhs.to_float(prec);
    let cf = closed_form.to_float(prec);
    let closed_form_rel_err = if cf.is_zero() {
        main.abs()
    } else {
        ((main - &cf) / &cf).abs()
    };

    Ok(CertificateReport {
        n,
        p: p.clone(),
        s: s.clone(),
        prec: prec.bits(),
        pass: gamma.map(|g| ratio.exceeds(g)),
        gamma: gamma.cloned(),
        lhs,
        rhs_f,
        rhs_u,
        ratio,
        ledger,
        error_lhs,
        error_rhs_f,
        quarantine_bound,
        quarantine_ok,
        closed_form,
        closed_form_rel_err,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    #[serde(with = "json::rational")]
    pub delta: Rational,
    pub prec: Precision,
    /// Exponents `r` at which to attach A_r estimates to each row.
    pub ar: Vec<f64>,
    pub search: SearchConfig,
    pub control: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            delta: pow2(-10),
            prec: Precision::default(),
            ar: Vec::new(),
            search: SearchConfig::default(),
            control: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: String,
    pub dim: u32,
    pub report: CertificateReport,
    /// `(r, sup_estimate)` pairs.
    pub ar: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub control: Vec<SweepRow>,
    /// Smallest `N` whose ratio exceeds `gamma`; `None` means exhaustion.
    pub first: Option<u32>,
    /// Ratio nondecreasing in `N` from `N = 4` on.
    pub monotone_from_4: bool,
}

/// Sweep `N = 1..=n_max` and locate the first `N` with ratio above `gamma`.
pub fn find_n(p: &Rational, s: &Rational, gamma: &Rational, n_max: u32, opts: &SweepOptions) -> Result<Sweep> {
    check_exponents(p, s)?;
    if n_max == 0 {
        return Err(Error::InvalidParameter("n_max must be at least 1".into()));
    }
    let two = Rational::from(2);
    let p_hint = p.to_f64().max(2.0);
    let per_n: Vec<Result<(SweepRow, Option<SweepRow>)>> = (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let mut params = BuildParams::new(n);
            params.delta = opts.delta.clone();
            params.p_hint = p_hint;
            params.epsilon = BuildParams::default_epsilon(n, p_hint);
            let c = build(&params)?;
            let ar = opts
                .ar
                .iter()
                .map(|&r| ar_characteristic(c.w(), r, &opts.search).map(|rep| (r, rep.sup_estimate.to_f64())))
                .collect::<Result<Vec<_>>>()?;
            let row = SweepRow {
                kind: "sweep".into(),
                dim: 1,
                report: blowup_ratio(&c, p, s, Some(gamma), opts.prec)?,
                ar: ar.clone(),
            };
            let control = if opts.control {
                Some(SweepRow {
                    kind: "control".into(),
                    dim: 1,
                    report: blowup_ratio(&c, &two, &Rational::from(1), Some(gamma), opts.prec)?,
                    ar,
                })
            } else {
                None
            };
            Ok((row, control))
        })
        .collect();
    let mut rows = Vec::new();
    let mut control = Vec::new();
    for r in per_n {
        let (row, ctl) = r?;
        rows.push(row);
        control.extend(ctl);
    }
    let first = rows.iter().find(|r| r.report.pass == Some(true)).map(|r| r.report.n);
    let ratios: Vec<f64> = rows.iter().filter(|r| r.report.n >= 4).map(|r| r.report.ratio.to_f64()).collect();
    let monotone_from_4 = ratios.windows(2).all(|w| w[1] >= w[0]);
    Ok(Sweep {
        rows,
        control,
        first,
        monotone_from_4,
    })
}

pub const CSV_COLUMNS: &str = "kind,dim,N,p,s,lhs,rhs_F,rhs_u,ratio,gamma,exceeds,prec";

fn decimal(x: &Scalar, prec: Precision) -> String {
    format_float(&x.to_float(prec))
}

/// Header plus one line per row; sweep rows first, then control rows.
pub fn sweep_csv(sweep: &Sweep, ar: &[f64]) -> String {
    let mut out = String::from(CSV_COLUMNS);
    for r in ar {
        write!(out, ",ar@{r}").unwrap();
    }
    out.push('\n');
    for row in sweep.rows.iter().chain(&sweep.control) {
        out.push_str(&csv_line(row));
        out.push('\n');
    }
    out
}

pub fn csv_line(row: &SweepRow) -> String {
    let r = &row.report;
    let prec = Precision::new(r.prec).unwrap_or_default();
    let mut line = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        row.kind,
        row.dim,
        r.n,
        r.p,
        r.s,
        decimal(&r.lhs, prec),
        decimal(&r.rhs_f, prec),
        decimal(&r.rhs_u, prec),
        r.ratio.render(),
        r.gamma.as_ref().map(|g| g.to_string()).unwrap_or_default(),
        r.pass.map(|b| b.to_string()).unwrap_or_default(),
        r.prec,
    );
    for (_, v) in &row.ar {
        write!(line, ",{v}").unwrap();
    }
    line
}
