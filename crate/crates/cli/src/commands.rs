use std::path::Path;

use czweights::certify::{self, blowup_ratio, find_n, make_forcing, pde_residual, SweepOptions};
use czweights::construct::{build, BuildParams, Construction, Refinement, TeethPolicy, ToothShape};
use czweights::geometry::{PiecewiseConstant, Weight};
use czweights::json::SCHEMA_VERSION;
use czweights::muckenhoupt::{ar_characteristic, theoretical_bound, ArReport, SearchConfig};
use czweights::positive::{cz_terms, ratio_key, solve, SRange};
use czweights::scalar::{format_float, parse_rational, Precision};
use rug::Rational;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Opts, Text};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmd {
    Build,
    Ar,
    Certify,
    Sweep,
    Solve,
}

impl Cmd {
    pub fn name(self) -> &'static str {
        match self {
            Cmd::Build => "build",
            Cmd::Ar => "ar",
            Cmd::Certify => "certify",
            Cmd::Sweep => "sweep",
            Cmd::Solve => "solve",
        }
    }

    fn allowed(self) -> &'static [&'static str] {
        const BUILD: &[&str] = &["n", "delta", "epsilon", "p_hint", "teeth", "refinement", "shape", "max_pieces"];
        const COMMON: &[&str] = &["out", "format", "prec", "seed"];
        let own: &[&str] = match self {
            Cmd::Build => BUILD,
            Cmd::Ar => &["bundle", "r", "frontier", "grid"],
            Cmd::Certify => &["bundle", "p", "s", "gamma", "tests"],
            Cmd::Sweep => &["p", "s", "gamma", "n_max", "delta", "ar", "frontier", "grid"],
            Cmd::Solve => &["w", "f", "p", "s", "any_s"],
        };
        let mut all: Vec<&'static str> = own.iter().chain(COMMON).copied().collect();
        if matches!(self, Cmd::Ar | Cmd::Certify) {
            all.extend(BUILD);
        }
        all.leak()
    }
}

pub struct Output {
    pub stem: &'static str,
    pub ext: &'static str,
    pub body: String,
    /// Set when a verification step failed; the output is still written.
    pub failure: Option<String>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Resolved option values, recorded as they are read so that every output
/// carries exactly the configuration that produced it.
struct Ctx {
    o: Opts,
    cfg: Map<String, Value>,
}

impl Ctx {
    fn record(&mut self, key: &str, v: impl Serialize) {
        self.cfg.insert(key.into(), serde_json::to_value(v).expect("plain values serialize"));
    }

    fn rational(&mut self, key: &str, v: Option<Text>, default: Option<&str>) -> Result<Option<Rational>, CliError> {
        let Some(text) = v.map(|t| t.0).or(default.map(String::from)) else {
            return Ok(None);
        };
        let q = parse_rational(&text).map_err(|e| usage(format!("--{key}: {e}")))?;
        self.record(key, q.to_string());
        Ok(Some(q))
    }

    fn reals(&mut self, key: &str, v: Option<Text>, default: &str) -> Result<Vec<f64>, CliError> {
        let text = v.map(|t| t.0).unwrap_or_else(|| default.into());
        let xs = text
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|_| usage(format!("--{key}: cannot parse {t:?}"))))
            .collect::<Result<Vec<_>, _>>()?;
        self.record(key, &xs);
        Ok(xs)
    }

    fn prec(&mut self) -> Result<Precision, CliError> {
        let bits = self.o.prec.take().unwrap_or(Precision::default().bits());
        self.record("prec", bits);
        Precision::new(bits).map_err(|e| usage(e.to_string()))
    }

    fn seed(&mut self) -> u64 {
        let seed = self.o.seed.take().unwrap_or(0);
        self.record("seed", seed);
        seed
    }

    fn format(&mut self, default: &'static str) -> Result<&'static str, CliError> {
        let f = match self.o.format.take().as_deref() {
            None => default,
            Some("csv") => "csv",
            Some("json") => "json",
            Some(other) => return Err(usage(format!("--format must be csv or json, got {other:?}"))),
        };
        self.record("format", f);
        Ok(f)
    }

    fn search(&mut self, prec: Precision) -> SearchConfig {
        let mut cfg = SearchConfig {
            prec,
            ..SearchConfig::default()
        };
        if let Some(f) = self.o.frontier.take() {
            cfg.frontier = f;
        }
        if let Some(g) = self.o.grid.take() {
            cfg.grid = g;
        }
        self.record("frontier", cfg.frontier);
        self.record("grid", cfg.grid);
        cfg
    }

    fn build_params(&mut self) -> Result<BuildParams, CliError> {
        let n = self.o.n.take().ok_or_else(|| usage("--n is required"))?;
        let mut p = BuildParams::new(n);
        self.record("n", n);
        p.p_hint = self.o.p_hint.take().unwrap_or(p.p_hint);
        self.record("p_hint", p.p_hint);
        let delta = self.o.delta.take();
        p.delta = self.rational("delta", delta, Some("2^-10"))?.expect("defaulted");
        let eps = self.o.epsilon.take();
        p.epsilon = match eps {
            Some(e) => self.rational("epsilon", Some(e), None)?.expect("given"),
            None => {
                let e = BuildParams::default_epsilon(n, p.p_hint);
                self.record("epsilon", e.to_string());
                e
            }
        };
        let teeth = self.o.teeth.take().unwrap_or_else(|| "budget:1".into());
        p.teeth = parse_teeth(&teeth)?;
        self.record("teeth", teeth);
        let refinement = self.o.refinement.take().unwrap_or_else(|| "nested".into());
        p.refinement = parse_refinement(&refinement)?;
        self.record("refinement", refinement);
        let shape = self.o.shape.take().unwrap_or_else(|| "centered".into());
        p.shape = match shape.as_str() {
            "centered" => ToothShape::Centered,
            "leading" => ToothShape::Leading,
            other => return Err(usage(format!("--shape must be centered or leading, got {other:?}"))),
        };
        self.record("shape", shape);
        p.max_pieces = self.o.max_pieces.take().unwrap_or(p.max_pieces);
        self.record("max_pieces", p.max_pieces);
        p.validate()?;
        Ok(p)
    }

    /// The construction named by `--bundle`, or a fresh build from the build flags.
    fn construction(&mut self) -> Result<(Construction, Option<String>), CliError> {
        match self.o.bundle.take() {
            Some(path) => {
                if let Some(k) = self.o.set_keys().into_iter().find(|k| {
                    ["n", "delta", "epsilon", "p_hint", "teeth", "refinement", "shape", "max_pieces"].contains(k)
                }) {
                    return Err(usage(format!("--{k} cannot be combined with --bundle")));
                }
                self.record("bundle", path.display().to_string());
                load_bundle(&path)
            }
            None => {
                let p = self.build_params()?;
                let c = build(&p)?;
                let failure = audit_failure(&c);
                Ok((c, failure))
            }
        }
    }
}

fn num<T: std::str::FromStr>(t: &str, what: &str) -> Result<T, CliError> {
    t.trim().parse().map_err(|_| usage(format!("{what}: cannot parse {t:?}")))
}

fn parse_teeth(s: &str) -> Result<TeethPolicy, CliError> {
    let parts: Vec<&str> = s.split(':').collect();
    Ok(match parts.as_slice() {
        ["budget"] => TeethPolicy::Budget { children: 1 },
        ["budget", c] => TeethPolicy::Budget {
            children: num(c, "--teeth")?,
        },
        ["geometric"] => TeethPolicy::Geometric,
        ["fixed", a, b] => TeethPolicy::Fixed {
            first: num(a, "--teeth")?,
            children: num(b, "--teeth")?,
        },
        ["schedule", a, list] => TeethPolicy::Schedule {
            first: num(a, "--teeth")?,
            children: list.split(',').map(|c| num(c, "--teeth")).collect::<Result<_, _>>()?,
        },
        _ => return Err(usage(format!("unknown teeth policy {s:?}"))),
    })
}

fn parse_refinement(s: &str) -> Result<Refinement, CliError> {
    Ok(match s.split_once(':') {
        None if s == "nested" => Refinement::Nested,
        None if s == "whitney" => Refinement::Whitney { depth: None },
        Some(("whitney", d)) => Refinement::Whitney {
            depth: Some(num(d, "--refinement")?),
        },
        _ => return Err(usage(format!("unknown refinement {s:?}"))),
    })
}

fn audit_failure(c: &Construction) -> Option<String> {
    let d = c.diagnostics();
    (!d.all_passed()).then(|| format!("audit: {}", d.failure_summary()))
}

/// Rebuild from the stored parameters and require the stored `w` and `u` to
/// match the rebuilt ones exactly.
fn load_bundle(path: &Path) -> Result<(Construction, Option<String>), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let stored = v.get("construction").unwrap_or(&v);
    let version = stored.get("schema_version").and_then(Value::as_u64);
    if version != Some(SCHEMA_VERSION as u64) {
        return Err(usage(format!("{}: unsupported schema version {version:?}", path.display())));
    }
    let params: BuildParams = serde_json::from_value(stored.get("params").cloned().unwrap_or(Value::Null))
        .map_err(|e| usage(format!("{}: bad params: {e}", path.display())))?;
    let c = build(&params)?;
    for (key, fresh) in [("w", serde_json::to_value(c.w())), ("u", serde_json::to_value(c.u()))] {
        if stored.get(key) != Some(&fresh.expect("serializable")) {
            return Err(CliError::Verification(format!(
                "{}: stored {key} does not match the rebuilt construction",
                path.display()
            )));
        }
    }
    let failure = audit_failure(&c);
    Ok((c, failure))
}

fn document(cfg: &Map<String, Value>, key: &str, body: Value) -> String {
    let mut doc = json!({ "schema_version": SCHEMA_VERSION, "config": cfg });
    doc[key] = body;
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

fn csv_preamble(cfg: &Map<String, Value>) -> String {
    format!(
        "# schema_version={SCHEMA_VERSION} config={}\n",
        serde_json::to_string(cfg).expect("serializable")
    )
}

/// Flags must belong to the command; keys in a shared config file that the
/// command does not use are ignored.
pub fn run(cmd: Cmd, flags: Opts, file: Opts) -> Result<Output, CliError> {
    let allowed = cmd.allowed();
    if let Some(k) = flags.set_keys().into_iter().find(|k| !allowed.contains(k)) {
        return Err(usage(format!("--{} is not an option of `{}`", k.replace('_', "-"), cmd.name())));
    }
    let mut ctx = Ctx {
        o: flags.or(file),
        cfg: Map::new(),
    };
    ctx.record("command", cmd.name());
    match cmd {
        Cmd::Build => cmd_build(ctx),
        Cmd::Ar => cmd_ar(ctx),
        Cmd::Certify => cmd_certify(ctx),
        Cmd::Sweep => cmd_sweep(ctx),
        Cmd::Solve => cmd_solve(ctx),
    }
}

fn cmd_build(mut ctx: Ctx) -> Result<Output, CliError> {
    ctx.format("json")?;
    let p = ctx.build_params()?;
    let c = build(&p)?;
    Ok(Output {
        stem: "build",
        ext: "json",
        failure: audit_failure(&c),
        body: document(&ctx.cfg, "construction", serde_json::to_value(&c).expect("serializable")),
    })
}

fn cmd_ar(mut ctx: Ctx) -> Result<Output, CliError> {
    let format = ctx.format("csv")?;
    let prec = ctx.prec()?;
    let rs = ctx.reals("r", ctx.o.r.clone(), "2.5,3,4")?;
    let search = ctx.search(prec);
    let (c, failure) = ctx.construction()?;
    let mut reports: Vec<ArReport> = Vec::new();
    for &r in &rs {
        let mut rep = ar_characteristic(c.w(), r, &search)?;
        if r > 2.0 {
            rep.theoretical_bound = Some(theoretical_bound(r, c.table(), prec)?);
        }
        reports.push(rep);
    }
    let n = c.table().n();
    let body = if format == "csv" {
        let mut s = csv_preamble(&ctx.cfg);
        s.push_str(&format!("N,{}\n", ArReport::CSV_HEADER));
        for rep in &reports {
            s.push_str(&format!("{n},{}\n", rep.csv_row()));
        }
        s
    } else {
        document(&ctx.cfg, "reports", serde_json::to_value(&reports).expect("serializable"))
    };
    Ok(Output {
        stem: "ar",
        ext: format,
        body,
        failure,
    })
}

fn cmd_certify(mut ctx: Ctx) -> Result<Output, CliError> {
    let format = ctx.format("json")?;
    let prec = ctx.prec()?;
    let seed = ctx.seed();
    let p = ctx.rational("p", ctx.o.p.clone(), Some("3"))?.expect("defaulted");
    let s = ctx.rational("s", ctx.o.s.clone(), Some("1"))?.expect("defaulted");
    let gamma = ctx.rational("gamma", ctx.o.gamma.clone(), None)?;
    let tests = ctx.o.tests.take().unwrap_or(100);
    ctx.record("tests", tests);
    let (c, mut failure) = ctx.construction()?;
    let rep = blowup_ratio(&c, &p, &s, gamma.as_ref(), prec)?;
    let residual = pde_residual(c.u(), c.w(), &make_forcing(&c), tests, seed);
    if !residual.passed {
        failure = Some(format!("PDE residual nonzero: {}", residual.max_residual));
    }
    let body = if format == "csv" {
        let row = certify::SweepRow {
            kind: "certify".into(),
            dim: 1,
            report: rep,
            ar: Vec::new(),
        };
        format!("{}{}\n{}\n", csv_preamble(&ctx.cfg), certify::CSV_COLUMNS, certify::csv_line(&row))
    } else {
        let mut doc = serde_json::to_value(&rep).expect("serializable");
        doc["residual"] = serde_json::to_value(&residual).expect("serializable");
        document(&ctx.cfg, "certificate", doc)
    };
    Ok(Output {
        stem: "certify",
        ext: format,
        body,
        failure,
    })
}

fn cmd_sweep(mut ctx: Ctx) -> Result<Output, CliError> {
    let format = ctx.format("csv")?;
    let prec = ctx.prec()?;
    ctx.seed();
    let p = ctx.rational("p", ctx.o.p.clone(), Some("3"))?.expect("defaulted");
    let s = ctx.rational("s", ctx.o.s.clone(), Some("1"))?.expect("defaulted");
    let gamma = ctx.rational("gamma", ctx.o.gamma.clone(), Some("10"))?.expect("defaulted");
    let n_max = ctx.o.n_max.take().unwrap_or(25);
    ctx.record("n_max", n_max);
    let delta = ctx.rational("delta", ctx.o.delta.clone(), Some("2^-10"))?.expect("defaulted");
    let ar = ctx.reals("ar", ctx.o.ar.clone(), "")?;
    let search = ctx.search(prec);
    let opts = SweepOptions {
        delta,
        prec,
        ar: ar.clone(),
        search,
        control: true,
    };
    let sweep = find_n(&p, &s, &gamma, n_max, &opts)?;
    let body = if format == "csv" {
        let mut out = csv_preamble(&ctx.cfg);
        out.push_str(&certify::sweep_csv(&sweep, &ar));
        let first = sweep.first.map(|n| n.to_string()).unwrap_or_else(|| "exhausted".into());
        out.push_str(&format!("# first_N={first} monotone_from_4={}\n", sweep.monotone_from_4));
        out
    } else {
        document(&ctx.cfg, "sweep", serde_json::to_value(&sweep).expect("serializable"))
    };
    Ok(Output {
        stem: "sweep",
        ext: format,
        body,
        failure: None,
    })
}

fn read_step(path: &Path) -> Result<PiecewiseConstant, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_solve(mut ctx: Ctx) -> Result<Output, CliError> {
    let format = ctx.format("json")?;
    let prec = ctx.prec()?;
    let w_path = ctx.o.w.take().ok_or_else(|| usage("--w is required"))?;
    let f_path = ctx.o.f.take().ok_or_else(|| usage("--f is required"))?;
    ctx.record("w", w_path.display().to_string());
    ctx.record("f", f_path.display().to_string());
    let p = ctx.rational("p", ctx.o.p.clone(), Some("2"))?.expect("defaulted");
    let s = ctx.rational("s", ctx.o.s.clone(), Some("1"))?.expect("defaulted");
    let any_s = ctx.o.any_s.take().unwrap_or(false);
    ctx.record("any_s", any_s);
    let w = Weight::new(read_step(&w_path)?)?;
    let f = read_step(&f_path)?;
    let mut res = solve(&w, &f)?;
    let range = if any_s { SRange::Override } else { SRange::Theorem };
    let cz = cz_terms(&res, &w, &f, &p, &s, range, prec)?;
    res.cz_ratios.insert(ratio_key(&p, &s), cz.ratio.clone());
    res.a2_estimate = Some(ar_characteristic(&w, 2.0, &SearchConfig { prec, ..SearchConfig::default() })?.sup_estimate);
    let failure = (!(res.flux_constant && res.boundary_exact)).then(|| "solution failed its exactness checks".to_string());
    let body = if format == "csv" {
        let row = format!(
            "solve,1,,{},{},{},{},{},{},,,{}",
            p,
            s,
            format_float(&cz.lhs.to_float(prec)),
            format_float(&cz.rhs_f.to_float(prec)),
            format_float(&cz.rhs_u.to_float(prec)),
            cz.ratio.render(),
            prec.bits()
        );
        format!("{}{}\n{row}\n", csv_preamble(&ctx.cfg), certify::CSV_COLUMNS)
    } else {
        let mut doc = serde_json::to_value(&res).expect("serializable");
        doc["cz"] = serde_json::to_value(&cz).expect("serializable");
        document(&ctx.cfg, "solve", doc)
    };
    Ok(Output {
        stem: "solve",
        ext: format,
        body,
        failure,
    })
}
