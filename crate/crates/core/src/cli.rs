//! Experiment configs, the batch runner behind `mvlab`, and CSV emitters.
//!
//! A config is line-oriented `key=value` text with optional `[section]`
//! headers; `#` starts a comment line. Command-line `key=value` arguments
//! override file entries. Every experiment can carry an `expect` value;
//! the exit status reports whether the outcome matched it.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::expansion::{
    counterexample_611, off_center_target, verify_expansion, verify_expansion_with_target, zero_order_target,
    Coefficients, CounterexampleReport, DeltaGrid, ExpansionReport, MeanValueConfig, Offset, Verdict,
};
use crate::expr::field_from_expr;
use crate::families::{grassmann_family, Extremum, FamilyKind, MatrixFamily, PhiSchedule, SupInfSpec};
use crate::heisenberg::{horizontal_ma_mvf, sublaplacian_expansion_check, HPoint, HScalarField};
use crate::operators::{OperatorHandle, OperatorSpec, OperatorValue};
use crate::quadrature::{trace_identity_selftest, QuadRule, Region, ScalarField, Smoothness};
use crate::solver::{build_grid, solve_dirichlet, Grid, GridField, Interpolation, SolveReport, SolverConfig};
use crate::symmat::SymMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Verify,
    Solve,
    Counterexample,
    HeisVerify,
    Selftest,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Verify => "verify",
            ExperimentKind::Solve => "solve",
            ExperimentKind::Counterexample => "counterexample",
            ExperimentKind::HeisVerify => "heis-verify",
            ExperimentKind::Selftest => "selftest",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "verify" => ExperimentKind::Verify,
            "solve" => ExperimentKind::Solve,
            "counterexample" => ExperimentKind::Counterexample,
            "heis-verify" => ExperimentKind::HeisVerify,
            "selftest" => ExperimentKind::Selftest,
            other => return Err(Error::InvalidParameter(format!("unknown experiment kind '{other}'"))),
        })
    }
}

/// Known keys and the sections they may appear in.
const KEYS: &[(&str, &[&str])] = &[
    ("kind", &["experiment"]),
    ("expect", &["experiment"]),
    ("seed", &["experiment"]),
    ("rule", &["experiment", "expansion", "counterexample", "heisenberg"]),
    ("out", &["experiment", "output"]),
    ("u", &["field", "heisenberg"]),
    ("x", &["field", "heisenberg"]),
    ("f", &["field", "solver"]),
    ("g", &["field", "solver"]),
    ("exact", &["field", "solver"]),
    ("op", &["coefficients"]),
    ("family", &["coefficients", "solver"]),
    ("extremum", &["coefficients", "solver"]),
    ("supinf", &["coefficients", "solver"]),
    ("phi", &["coefficients", "expansion", "solver", "heisenberg"]),
    ("target", &["coefficients", "expansion"]),
    ("eps", &["expansion", "solver", "counterexample", "heisenberg"]),
    ("region", &["expansion"]),
    ("offset", &["expansion"]),
    ("alpha", &["expansion"]),
    ("alpha0", &["expansion"]),
    ("samples", &["expansion", "heisenberg"]),
    ("inject", &["expansion", "heisenberg"]),
    ("tol", &["expansion", "solver", "heisenberg"]),
    ("lo", &["solver"]),
    ("hi", &["solver"]),
    ("h", &["solver"]),
    ("max_iter", &["solver"]),
    ("interp", &["solver"]),
    ("directions", &["solver"]),
    ("nested", &["solver"]),
    ("error_tol", &["solver"]),
    ("delta_lo", &["counterexample"]),
    ("delta_hi", &["counterexample"]),
    ("delta_points", &["counterexample"]),
    ("refine", &["counterexample"]),
    ("mode", &["heisenberg"]),
    ("trials", &["selftest"]),
];

const SECTIONS: &[&str] = &[
    "experiment",
    "field",
    "coefficients",
    "expansion",
    "solver",
    "counterexample",
    "heisenberg",
    "selftest",
    "output",
];

#[derive(Clone, Debug)]
struct Entry {
    value: String,
    line: usize,
    column: usize,
}

/// A parsed experiment description.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    entries: BTreeMap<String, Entry>,
}

fn known_key(key: &str) -> Option<&'static [&'static str]> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, s)| *s)
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            entries: BTreeMap::new(),
        }
    }

    /// Parses config text. `kind` overrides a `kind=` entry; one of the two
    /// must be present.
    pub fn parse(text: &str, kind: Option<ExperimentKind>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let indent = raw.len() - raw.trim_start().len();
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(line, indent + 1, "unterminated section header"))?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(Error::parse(line, indent + 2, format!("unknown section '{name}'")));
                }
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Error::parse(line, indent + 1, format!("expected key=value, found '{t}'")))?;
            let key = k.trim();
            let sections =
                known_key(key).ok_or_else(|| Error::parse(line, indent + 1, format!("unknown key '{key}'")))?;
            if let Some(s) = &section {
                if !sections.contains(&s.as_str()) {
                    return Err(Error::parse(
                        line,
                        indent + 1,
                        format!("key '{key}' does not belong in section [{s}]"),
                    ));
                }
            }
            let value_col = indent + k.len() + 2 + (v.len() - v.trim_start().len());
            let entry = Entry {
                value: unquote(v.trim()).to_string(),
                line,
                column: value_col,
            };
            if entries.insert(key.to_string(), entry).is_some() {
                return Err(Error::parse(line, indent + 1, format!("duplicate key '{key}'")));
            }
        }
        let kind = match (kind, entries.get("kind")) {
            (Some(k), _) => k,
            (None, Some(e)) => e
                .value
                .parse()
                .map_err(|_| Error::parse(e.line, e.column, format!("unknown experiment kind '{}'", e.value)))?,
            (None, None) => return Err(Error::parse(1, 1, "missing 'kind'")),
        };
        Ok(Self { kind, entries })
    }

    pub fn from_file(path: &Path, kind: Option<ExperimentKind>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?, kind)
    }

    /// Sets `key=value` from the command line (argument position `arg`).
    pub fn set_arg(&mut self, arg: usize, item: &str) -> Result<()> {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::parse(1, arg, format!("expected key=value, found '{item}'")))?;
        let key = k.trim();
        if known_key(key).is_none() {
            return Err(Error::parse(1, arg, format!("unknown key '{key}'")));
        }
        self.set(key, unquote(v.trim()));
        Ok(())
    }

    /// Unchecked override, used for flags.
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line: 0,
                column: 0,
            },
        );
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn err(&self, key: &str, msg: impl fmt::Display) -> Error {
        match self.entries.get(key) {
            Some(e) if e.line > 0 => Error::parse(e.line, e.column, format!("{key}: {msg}")),
            _ => Error::InvalidParameter(format!("{key}: {msg}")),
        }
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::InvalidParameter(format!("{} experiment needs '{key}'", self.kind.name())))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| self.err(key, e)),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => parse_list(v).map(Some).map_err(|e| self.err(key, e)),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(v) => Err(self.err(key, format!("expected true or false, found '{v}'"))),
        }
    }

    fn with_ctx<T>(&self, key: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| match e {
            Error::Parse { message, .. } => self.err(key, message),
            other => other,
        })
    }

    fn seed(&self) -> Result<u64> {
        Ok(self.parsed("seed")?.unwrap_or(1))
    }

    fn rule(&self, default: QuadRule) -> Result<QuadRule> {
        match self.get("rule") {
            None => Ok(default),
            Some(v) => match self.with_ctx("rule", v.parse())? {
                // Monte Carlo rules without their own seed follow the experiment seed.
                QuadRule::MonteCarlo { nodes, .. } if !v.contains("seed") => Ok(QuadRule::MonteCarlo {
                    nodes,
                    seed: self.seed()?,
                }),
                r => Ok(r),
            },
        }
    }

    fn expectation(&self) -> Result<Expectation> {
        match self.get("expect") {
            None => Ok(Expectation::Any),
            Some(v) => v.parse().map_err(|e: Error| self.err("expect", e)),
        }
    }
}

fn unquote(s: &str) -> &str {
    s.strip_prefix('"')
        .and_then(|t| t.strip_suffix('"'))
        .unwrap_or(s)
}

fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad number '{}'", t.trim())))
        .collect()
}

/// `dyadic:a..b` for `2^{-a}, …, 2^{-b}`, `log10:a..b:m` for `m` log-spaced
/// values, or an explicit comma list.
fn parse_eps(s: &str) -> std::result::Result<Vec<f64>, String> {
    let range = |r: &str| -> std::result::Result<(f64, f64), String> {
        let (a, b) = r.split_once("..").ok_or_else(|| format!("expected a..b, found '{r}'"))?;
        let a = a.trim().parse::<f64>().map_err(|_| format!("bad number '{a}'"))?;
        let b = b.trim().parse::<f64>().map_err(|_| format!("bad number '{b}'"))?;
        Ok((a, b))
    };
    if let Some(r) = s.strip_prefix("dyadic:") {
        let (a, b) = range(r)?;
        if a.fract() != 0.0 || b.fract() != 0.0 || a > b {
            return Err(format!("dyadic range needs integers a <= b, found '{r}'"));
        }
        return Ok((a as i32..=b as i32).map(|k| 2f64.powi(-k)).collect());
    }
    if let Some(r) = s.strip_prefix("log10:") {
        let (r, m) = r.rsplit_once(':').ok_or("expected log10:a..b:count")?;
        let (a, b) = range(r)?;
        let m: usize = m.trim().parse().map_err(|_| format!("bad count '{m}'"))?;
        if m < 2 {
            return Err("log10 range needs at least 2 points".into());
        }
        return Ok((0..m)
            .map(|i| 10f64.powf(a + (b - a) * i as f64 / (m - 1) as f64))
            .collect());
    }
    parse_list(s)
}

/// What an experiment is expected to show.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Expectation {
    Any,
    Converges,
    Diverges,
    Inconclusive,
    Pass,
    /// Fitted counterexample exponent in `[lo, hi]`.
    Exponent(f64, f64),
    /// Witness-scale counterexample exponent in `[lo, hi]`.
    Witness(f64, f64),
}

impl FromStr for Expectation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let band = |r: &str| -> Result<(f64, f64)> {
            let (a, b) = r
                .split_once("..")
                .ok_or_else(|| Error::InvalidParameter(format!("expected lo..hi, found '{r}'")))?;
            let p = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidParameter(format!("bad number '{t}'")))
            };
            Ok((p(a)?, p(b)?))
        };
        Ok(match s.trim() {
            "any" => Expectation::Any,
            "converges" => Expectation::Converges,
            "diverges" => Expectation::Diverges,
            "inconclusive" => Expectation::Inconclusive,
            "pass" => Expectation::Pass,
            t => {
                if let Some(r) = t.strip_prefix("exponent:") {
                    let (a, b) = band(r)?;
                    Expectation::Exponent(a, b)
                } else if let Some(r) = t.strip_prefix("witness:") {
                    let (a, b) = band(r)?;
                    Expectation::Witness(a, b)
                } else {
                    return Err(Error::InvalidParameter(format!(
                        "unknown expectation '{t}' (any, converges, diverges, inconclusive, pass, exponent:a..b, witness:a..b)"
                    )));
                }
            }
        })
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Any => write!(f, "any"),
            Expectation::Converges => write!(f, "converges"),
            Expectation::Diverges => write!(f, "diverges"),
            Expectation::Inconclusive => write!(f, "inconclusive"),
            Expectation::Pass => write!(f, "pass"),
            Expectation::Exponent(a, b) => write!(f, "exponent:{a}..{b}"),
            Expectation::Witness(a, b) => write!(f, "witness:{a}..{b}"),
        }
    }
}

fn verdict_matches(e: Expectation, v: Verdict) -> bool {
    match e {
        Expectation::Any => true,
        Expectation::Converges | Expectation::Pass => v == Verdict::Converges,
        Expectation::Diverges => matches!(v, Verdict::Diverges { .. }),
        Expectation::Inconclusive => v == Verdict::Inconclusive,
        Expectation::Exponent(..) | Expectation::Witness(..) => false,
    }
}

/// Result of one experiment run.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub kind: ExperimentKind,
    pub expectation: Expectation,
    pub matched: bool,
    /// Deterministic human-readable summary (also written to disk).
    pub summary: String,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.matched {
            0
        } else {
            1
        }
    }
}

/// Rows of a CSV artifact.
pub trait ToCsv {
    fn header(&self) -> Vec<String>;
    fn rows(&self) -> Vec<Vec<String>>;
}

/// Materialized rows of any [`ToCsv`] value.
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn of(t: &impl ToCsv) -> Self {
        Self {
            header: t.header(),
            rows: t.rows(),
        }
    }
}

impl ToCsv for CsvTable {
    fn header(&self) -> Vec<String> {
        self.header.clone()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows.clone()
    }
}

/// 17 significant digits, so values round-trip exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn emit_csv(report: &impl ToCsv, path: &Path) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::InvalidParameter(format!("csv: {other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(report.header()).map_err(io)?;
    for row in report.rows() {
        w.write_record(row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

impl ToCsv for ExpansionReport {
    fn header(&self) -> Vec<String> {
        ["eps", "mean", "delta", "residual", "matrix_id"].map(String::from).to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.records
            .iter()
            .zip(&self.residuals)
            .map(|(r, res)| {
                vec![
                    fmt_float(r.eps),
                    fmt_float(r.mean),
                    fmt_float(r.delta),
                    res.map(fmt_float).unwrap_or_default(),
                    r.matrix_id.clone(),
                ]
            })
            .collect()
    }
}

impl ToCsv for SolveReport {
    fn header(&self) -> Vec<String> {
        vec!["iter".into(), "residual".into()]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.history
            .iter()
            .enumerate()
            .map(|(i, r)| vec![(i + 1).to_string(), fmt_float(*r)])
            .collect()
    }
}

impl ToCsv for CounterexampleReport {
    fn header(&self) -> Vec<String> {
        ["eps", "inf_average", "argmin_delta", "witness_average", "normalized"]
            .map(String::from)
            .to_vec()
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.records
            .iter()
            .map(|r| {
                [r.eps, r.inf_average, r.argmin_delta, r.witness_average, r.normalized]
                    .into_iter()
                    .map(fmt_float)
                    .collect()
            })
            .collect()
    }
}

/// A solution on the box nodes, in lexicographic node order.
pub struct FieldDump<'a> {
    pub grid: &'a Grid,
    pub field: &'a GridField,
}

impl ToCsv for FieldDump<'_> {
    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (1..=self.grid.dim()).map(|i| format!("x{i}")).collect();
        h.push("value".into());
        h
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.grid
            .box_nodes()
            .into_iter()
            .map(|i| {
                let mut row: Vec<String> = self.grid.point(i).into_iter().map(fmt_float).collect();
                row.push(fmt_float(self.field.values()[i]));
                row
            })
            .collect()
    }
}

/// Per-dimension selftest errors.
pub struct SelftestReport {
    pub rows: Vec<(usize, Region, f64)>,
}

impl ToCsv for SelftestReport {
    fn header(&self) -> Vec<String> {
        vec!["n".into(), "region".into(), "max_rel_error".into()]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|(n, r, e)| vec![n.to_string(), region_name(*r).into(), fmt_float(*e)])
            .collect()
    }
}

fn region_name(r: Region) -> &'static str {
    match r {
        Region::Ball => "ball",
        Region::Sphere => "sphere",
    }
}

/// `matrices:a11,a12,…;b11,…` (row-major, symmetric) or a family text form.
fn parse_family(s: &str, n: usize) -> Result<MatrixFamily> {
    if let Some(rest) = s.trim().strip_prefix("matrices:") {
        let members = rest
            .split(';')
            .map(|m| {
                let v = parse_list(m).map_err(Error::InvalidParameter)?;
                if v.len() != n * n {
                    return Err(Error::InvalidParameter(format!(
                        "matrix '{m}' has {} entries, expected {}",
                        v.len(),
                        n * n
                    )));
                }
                let rows: Vec<Vec<f64>> = v.chunks(n).map(<[f64]>::to_vec).collect();
                SymMatrix::from_rows(&rows)
            })
            .collect::<Result<Vec<_>>>()?;
        return MatrixFamily::finite(members);
    }
    MatrixFamily::parse(s, n)
}

/// `grassmann:k=2,count=64` or `list:<family>;<family>…`.
fn parse_supinf(s: &str, n: usize, seed: u64) -> Result<SupInfSpec> {
    let s = s.trim();
    if let Some(rest) = s.strip_prefix("list:") {
        return SupInfSpec::explicit(rest.split(';').map(|f| parse_family(f, n)).collect::<Result<_>>()?);
    }
    let (head, kv) = crate::textform::parse_head(s)?;
    if head != "grassmann" {
        return Err(Error::InvalidParameter(format!("unknown sup-inf form '{head}'")));
    }
    kv.finish(&["k", "count"])?;
    grassmann_family(kv.usize("k")?, n, kv.opt_usize("count")?.unwrap_or(64), seed)
}

fn coefficients(cfg: &ExperimentConfig, n: usize, op: Option<&OperatorSpec>) -> Result<Coefficients> {
    let seed = cfg.seed()?;
    if let Some(f) = cfg.get("family") {
        let family = cfg.with_ctx("family", parse_family(f, n))?;
        let extremum = match cfg.get("extremum").unwrap_or("inf") {
            "inf" => Extremum::Inf,
            "sup" => Extremum::Sup,
            other => return Err(cfg.err("extremum", format!("expected inf or sup, found '{other}'"))),
        };
        return Ok(Coefficients::Family { family, extremum });
    }
    if let Some(s) = cfg.get("supinf") {
        return Ok(Coefficients::SupInf(cfg.with_ctx("supinf", parse_supinf(s, n, seed))?));
    }
    if let Some(OperatorSpec::IsaacsWrapped {
        base,
        theta,
        big_theta,
        grid,
    }) = op
    {
        return Ok(Coefficients::Isaacs {
            base: OperatorHandle::clone(base),
            theta: *theta,
            big_theta: *big_theta,
            grid: *grid,
        });
    }
    Err(Error::InvalidParameter(
        "give 'family', 'supinf', or an isaacs 'op' to define the coefficients".into(),
    ))
}

fn field_rule(u: &ScalarField, rule_cfg: Result<QuadRule>, explicit: bool) -> Result<QuadRule> {
    let rule = rule_cfg?;
    if !explicit && matches!(u.smoothness(), Smoothness::C2ExceptAt(_)) {
        return Ok(QuadRule::MonteCarlo {
            nodes: 100_000,
            seed: 0x5eed,
        });
    }
    Ok(rule)
}

fn mean_value_config(cfg: &ExperimentConfig, default_eps: &str) -> Result<MeanValueConfig> {
    let eps = parse_eps(cfg.get("eps").unwrap_or(default_eps)).map_err(|e| cfg.err("eps", e))?;
    let mut mv = cfg.with_ctx("eps", MeanValueConfig::new(eps))?;
    mv.rule = cfg.rule(QuadRule::default())?;
    mv.sampler.seed = cfg.seed()?;
    if let Some(c) = cfg.parsed("samples")? {
        mv.sampler.count = c;
    }
    if let Some(b) = cfg.bool("inject")? {
        mv.inject = b;
    }
    if let Some(t) = cfg.parsed("tol")? {
        mv.tol_conv = t;
    }
    if let Some(p) = cfg.get("phi") {
        mv.truncation = Some(cfg.with_ctx("phi", PhiSchedule::parse(p))?);
    }
    Ok(mv)
}

fn expansion_summary(out: &mut String, rep: &ExpansionReport) {
    let _ = writeln!(out, "target: {}", rep.target);
    let _ = writeln!(out, "verdict: {}", rep.verdict);
    match rep.fitted_order {
        Some(o) => {
            let _ = writeln!(out, "fitted_order: {}", fmt_float(o));
        }
        None => {
            let _ = writeln!(out, "fitted_order: none");
        }
    }
    if let Some(r) = rep.last_residual() {
        let _ = writeln!(out, "last_residual: {}", fmt_float(r));
    }
    let _ = writeln!(out, "tolerance: {}", fmt_float(rep.tolerance));
    let _ = writeln!(out, "rule: {}", rep.rule);
    for n in &rep.notes {
        let _ = writeln!(out, "note: {n}");
    }
}

fn run_verify(cfg: &ExperimentConfig, out: &mut String) -> Result<(Verdict, CsvTable)> {
    let x = cfg.list("x")?.ok_or_else(|| cfg.err("x", "missing evaluation point"))?;
    let n = x.len();
    let u = cfg.with_ctx("u", field_from_expr(cfg.required("u")?, n))?;
    let op: Option<OperatorSpec> = match cfg.get("op") {
        Some(s) => Some(cfg.with_ctx("op", s.parse())?),
        None => None,
    };
    if let Some(o) = &op {
        o.validate(n)?;
    }
    let coeffs = coefficients(cfg, n, op.as_ref())?;
    let mut mv = mean_value_config(cfg, "dyadic:3..8")?;
    mv.rule = field_rule(&u, cfg.rule(QuadRule::default()), cfg.get("rule").is_some())?;
    if let Some(r) = cfg.get("region") {
        mv.region = match r {
            "ball" => Region::Ball,
            "sphere" => Region::Sphere,
            other => return Err(cfg.err("region", format!("expected ball or sphere, found '{other}'"))),
        };
    }
    if let Some(mut d) = cfg.list("offset")? {
        let norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(cfg.err("offset", "direction must be nonzero"));
        }
        d.iter_mut().for_each(|v| *v /= norm);
        let alpha = cfg.parsed("alpha")?.unwrap_or(2.0);
        mv.offset = Some(cfg.with_ctx("alpha", Offset::new(d, alpha))?);
    }
    if let Some(a0) = cfg.parsed("alpha0")? {
        mv.zero_order = a0;
    }
    let explicit: Option<f64> = cfg.parsed("target")?;
    let variant = mv.offset.is_some() || mv.zero_order > 0.0;
    let report = match (explicit, variant) {
        (Some(t), _) => verify_expansion_with_target(&u, &x, &coeffs, OperatorValue::Finite(t), &mv)?,
        (None, true) => {
            let members = match &coeffs {
                Coefficients::Family { family, .. } => match family.kind() {
                    FamilyKind::Finite(m) => m.clone(),
                    _ => {
                        return Err(Error::InvalidParameter(
                            "variant targets need a finite family ('matrices:…') or an explicit 'target'".into(),
                        ))
                    }
                },
                _ => return Err(Error::InvalidParameter("variants take a single inf family".into())),
            };
            let hess = u.hessian(&x);
            let target = match &mv.offset {
                Some(o) => off_center_target(&members, &hess, &u.gradient(&x), o, mv.region)?,
                None => zero_order_target(&members, &hess, u.eval(&x), mv.zero_order, mv.region)?,
            };
            verify_expansion_with_target(&u, &x, &coeffs, OperatorValue::Finite(target), &mv)?
        }
        (None, false) => {
            let op = op.ok_or_else(|| {
                Error::InvalidParameter("verify needs 'op' or an explicit 'target'".into())
            })?;
            verify_expansion(&u, &x, &coeffs, &op, &mv)?
        }
    };
    let _ = writeln!(out, "field: {}", u.label());
    expansion_summary(out, &report);
    Ok((report.verdict, CsvTable::of(&report)))
}

fn run_heis(cfg: &ExperimentConfig, out: &mut String) -> Result<(Verdict, CsvTable)> {
    let x = cfg.list("x")?.ok_or_else(|| cfg.err("x", "missing point q = x,y,z"))?;
    if x.len() != 3 {
        return Err(cfg.err("x", format!("a Heisenberg point has 3 coordinates, got {}", x.len())));
    }
    let q = HPoint::new(x[0], x[1], x[2]);
    let u = cfg.with_ctx("u", field_from_expr(cfg.required("u")?, 3))?;
    let v = HScalarField::from_euclidean(u)?;
    let mv = mean_value_config(cfg, "dyadic:2..7")?;
    let report = match cfg.get("mode").unwrap_or("sublaplacian") {
        "sublaplacian" => sublaplacian_expansion_check(&v, q, &mv)?,
        "ma" => horizontal_ma_mvf(&v, q, &mv)?,
        other => return Err(cfg.err("mode", format!("expected sublaplacian or ma, found '{other}'"))),
    };
    let _ = writeln!(out, "field: {}", v.label());
    let _ = writeln!(out, "point: {q}");
    expansion_summary(out, &report);
    Ok((report.verdict, CsvTable::of(&report)))
}

/// Threshold the normalized counterexample increments must cross.
pub const COUNTEREXAMPLE_THRESHOLD: f64 = -1e2;

/// `Diverges` when the normalized increments decrease strictly along the
/// decreasing radii and end below [`COUNTEREXAMPLE_THRESHOLD`].
pub fn counterexample_verdict(rep: &CounterexampleReport) -> Verdict {
    let d: Vec<f64> = rep.records.iter().map(|r| r.normalized).collect();
    let decreasing = d.windows(2).all(|w| w[1] < w[0]);
    match d.last() {
        Some(&last) if decreasing && last < COUNTEREXAMPLE_THRESHOLD => {
            let eps: Vec<f64> = rep.records.iter().map(|r| r.eps).collect();
            Verdict::Diverges {
                exponent: crate::expansion::fit::divergence_exponent(&eps, &d).unwrap_or(f64::NAN),
            }
        }
        _ => Verdict::Inconclusive,
    }
}

fn run_counterexample(
    cfg: &ExperimentConfig,
    expect: Expectation,
    out: &mut String,
) -> Result<(bool, CsvTable)> {
    let eps = parse_eps(cfg.get("eps").unwrap_or("log10:-2..-4:9")).map_err(|e| cfg.err("eps", e))?;
    let d = DeltaGrid::default();
    let grid = DeltaGrid {
        log10_lo: cfg.parsed("delta_lo")?.unwrap_or(d.log10_lo),
        log10_hi: cfg.parsed("delta_hi")?.unwrap_or(d.log10_hi),
        points: cfg.parsed("delta_points")?.unwrap_or(d.points),
        refine: cfg.bool("refine")?.unwrap_or(d.refine),
    };
    let rule = cfg.rule(QuadRule::MonteCarlo {
        nodes: 100_000,
        seed: cfg.seed()?,
    })?;
    let rep = counterexample_611(&eps, grid, rule)?;
    let verdict = counterexample_verdict(&rep);
    let show = |o: Option<f64>| o.map_or_else(|| "none".to_string(), fmt_float);
    let _ = writeln!(out, "fitted_exponent: {}", show(rep.fitted_exponent));
    let _ = writeln!(out, "witness_exponent: {}", show(rep.witness_exponent));
    if let Some(r) = rep.records.last() {
        let _ = writeln!(out, "normalized_at_smallest_eps: {} (eps={})", fmt_float(r.normalized), r.eps);
    }
    let _ = writeln!(out, "verdict: {verdict}");
    let _ = writeln!(out, "constants: {}", rep.constants.map(fmt_float).join(","));
    let _ = writeln!(out, "rule: {}", rep.rule);
    for n in &rep.notes {
        let _ = writeln!(out, "note: {n}");
    }
    let within = |v: Option<f64>, a: f64, b: f64| v.is_some_and(|v| v >= a && v <= b);
    let matched = match expect {
        Expectation::Exponent(a, b) => within(rep.fitted_exponent, a, b),
        Expectation::Witness(a, b) => within(rep.witness_exponent, a, b),
        e => verdict_matches(e, verdict),
    };
    Ok((matched, CsvTable::of(&rep)))
}

fn run_solve(cfg: &ExperimentConfig, out: &mut String) -> Result<(bool, Vec<(String, CsvTable)>)> {
    let lo = cfg.list("lo")?.ok_or_else(|| cfg.err("lo", "missing box corner"))?;
    let hi = cfg.list("hi")?.ok_or_else(|| cfg.err("hi", "missing box corner"))?;
    let n = lo.len();
    let eps: f64 = cfg.parsed("eps")?.ok_or_else(|| cfg.err("eps", "missing"))?;
    // h = ε² unless given.
    let h: f64 = cfg.parsed("h")?.unwrap_or(eps * eps);
    let coeffs = coefficients(cfg, n, None)?;
    let mut sc = SolverConfig {
        seed: cfg.seed()?,
        ..SolverConfig::default()
    };
    if let Some(p) = cfg.get("phi") {
        sc.truncation = Some(cfg.with_ctx("phi", PhiSchedule::parse(p))?);
    }
    if let Some(r) = cfg.get("rule") {
        sc.rule = cfg.with_ctx("rule", r.parse())?;
    }
    if let Some(i) = cfg.get("interp") {
        sc.interpolation = match i {
            "linear" | "multilinear" => Interpolation::Multilinear,
            "quadratic" | "multiquadratic" => Interpolation::Multiquadratic,
            other => return Err(cfg.err("interp", format!("unknown interpolation '{other}'"))),
        };
    }
    if let Some(d) = cfg.parsed("directions")? {
        sc.directions = d;
    }
    if let Some(b) = cfg.bool("nested")? {
        sc.nested = b;
    }
    let f = cfg.with_ctx("f", field_from_expr(cfg.get("f").unwrap_or("0"), n))?;
    let g = cfg.with_ctx("g", field_from_expr(cfg.required("g")?, n))?;
    let tol = cfg.parsed("tol")?.unwrap_or(1e-6);
    let max_iter = cfg.parsed("max_iter")?.unwrap_or(10_000);
    let grid = build_grid(&lo, &hi, h, eps, &coeffs, sc.truncation.as_ref())?;
    let (u, rep) = solve_dirichlet(&grid, &coeffs, &f, &g, eps, tol, max_iter, &sc)?;
    let _ = writeln!(out, "grid: h={} counts={:?} collar={}", h, grid.counts(), fmt_float(grid.collar_width()));
    let _ = writeln!(out, "iterations: {}", rep.iterations);
    let _ = writeln!(out, "residual: {}", fmt_float(rep.residual));
    let _ = writeln!(out, "converged: {}", rep.converged);
    let _ = writeln!(out, "stagnated: {}", rep.stagnated);
    let _ = writeln!(out, "min_stencil_weight: {}", fmt_float(rep.min_stencil_weight));
    let mut ok = rep.converged;
    if let Some(e) = cfg.get("exact") {
        let exact = cfg.with_ctx("exact", field_from_expr(e, n))?;
        let err = u.max_error(&grid, |x| exact.eval(x));
        let _ = writeln!(out, "max_error: {}", fmt_float(err));
        if let Some(t) = cfg.parsed::<f64>("error_tol")? {
            ok &= err <= t;
        }
    }
    let _ = writeln!(out, "verdict: {}", if ok { "converges" } else { "fails" });
    let field = CsvTable::of(&FieldDump {
        grid: &grid,
        field: &u,
    });
    Ok((ok, vec![("csv".into(), CsvTable::of(&rep)), ("field.csv".into(), field)]))
}

fn run_selftest(cfg: &ExperimentConfig, out: &mut String) -> Result<(bool, CsvTable)> {
    let rule = cfg.rule(QuadRule::default())?;
    let trials = cfg.parsed("trials")?.unwrap_or(100);
    let seed = cfg.seed()?;
    let tol = if rule.is_monte_carlo() { 2e-2 } else { 1e-10 };
    let mut rows = Vec::new();
    let mut ok = true;
    for n in [2, 3] {
        for region in [Region::Ball, Region::Sphere] {
            let e = trace_identity_selftest(n, rule, region, trials, seed)?;
            ok &= e <= tol;
            let _ = writeln!(out, "n={n} {}: max_rel_error={}", region_name(region), fmt_float(e));
            rows.push((n, region, e));
        }
    }
    let _ = writeln!(out, "rule: {rule}");
    let _ = writeln!(out, "tolerance: {}", fmt_float(tol));
    let _ = writeln!(out, "verdict: {}", if ok { "pass" } else { "fail" });
    Ok((ok, CsvTable::of(&SelftestReport { rows })))
}

/// Runs one experiment, writing `<out>.csv` (and friends) plus
/// `<out>.summary.txt` when `out` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let expect = cfg.expectation()?;
    let mut summary = String::new();
    let _ = writeln!(summary, "experiment: {}", cfg.kind.name());
    let (matched, artifacts): (bool, Vec<(String, CsvTable)>) = match cfg.kind {
        ExperimentKind::Verify => {
            let (v, csv) = run_verify(cfg, &mut summary)?;
            (verdict_matches(expect, v), vec![("csv".into(), csv)])
        }
        ExperimentKind::HeisVerify => {
            let (v, csv) = run_heis(cfg, &mut summary)?;
            (verdict_matches(expect, v), vec![("csv".into(), csv)])
        }
        ExperimentKind::Counterexample => {
            let (m, csv) = run_counterexample(cfg, expect, &mut summary)?;
            (m, vec![("csv".into(), csv)])
        }
        ExperimentKind::Solve => {
            let (ok, files) = run_solve(cfg, &mut summary)?;
            let m = match expect {
                Expectation::Any => true,
                Expectation::Converges | Expectation::Pass => ok,
                _ => !ok,
            };
            (m, files)
        }
        ExperimentKind::Selftest => {
            let (ok, csv) = run_selftest(cfg, &mut summary)?;
            let m = match expect {
                Expectation::Any => true,
                Expectation::Pass | Expectation::Converges => ok,
                _ => !ok,
            };
            (m, vec![("csv".into(), csv)])
        }
    };
    let _ = writeln!(summary, "expect: {expect}");
    let _ = writeln!(summary, "matched: {matched}");
    let mut files = Vec::new();
    if let Some(prefix) = cfg.get("out") {
        for (suffix, table) in &artifacts {
            let path = PathBuf::from(format!("{prefix}.{suffix}"));
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            emit_csv(table, &path)?;
            files.push(path);
        }
        let path = PathBuf::from(format!("{prefix}.summary.txt"));
        fs::write(&path, &summary)?;
        files.push(path);
    }
    Ok(Outcome {
        kind: cfg.kind,
        expectation: expect,
        matched,
        summary,
        files,
    })
}

/// Runs every `*.cfg` in `dir` (sorted by name), writing artifacts under
/// `out_dir/<stem>`. Returns one line per config and whether all matched.
pub fn run_table(dir: &Path, out_dir: Option<&Path>, overrides: &[(String, String)]) -> Result<(String, bool)> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidParameter(format!("no .cfg files in {}", dir.display())));
    }
    let mut lines = String::new();
    let mut all = true;
    for p in paths {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let outcome = ExperimentConfig::from_file(&p, None).and_then(|mut cfg| {
            for (k, v) in overrides {
                cfg.set(k, v);
            }
            if let Some(d) = out_dir {
                cfg.set("out", &d.join(&stem).to_string_lossy());
            }
            run_experiment(&cfg)
        });
        match outcome {
            Ok(o) => {
                all &= o.matched;
                let _ = writeln!(
                    lines,
                    "{stem}\t{}\t{}",
                    o.kind.name(),
                    if o.matched { "match" } else { "MISMATCH" }
                );
            }
            Err(e) => {
                all = false;
                let _ = writeln!(lines, "{stem}\terror\t{e}");
            }
        }
    }
    Ok((lines, all))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_sections_and_errors() {
        let text = "kind = verify\n[field]\nu = \"x1^2\"\nx = 0,0\n[coefficients]\nop = laplacian\n";
        let cfg = ExperimentConfig::parse(text, None).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Verify);
        assert_eq!(cfg.get("u"), Some("x1^2"));
        match ExperimentConfig::parse("kind=verify\n[field]\n  bogus = 1\n", None) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse("kind=verify\n[field]\nop = ma\n", None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::parse("[nope]\n", Some(ExperimentKind::Verify)).is_err());
    }

    #[test]
    fn eps_forms() {
        assert_eq!(parse_eps("dyadic:1..3").unwrap(), vec![0.5, 0.25, 0.125]);
        let l = parse_eps("log10:-2..-4:3").unwrap();
        assert!((l[1] - 1e-3).abs() < 1e-18);
        assert_eq!(parse_eps("0.5, 0.25").unwrap(), vec![0.5, 0.25]);
        assert!(parse_eps("dyadic:3").is_err());
    }

    #[test]
    fn verify_pucci_example() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Verify);
        for (i, a) in [
            "op=pucci-:theta=1,Theta=2",
            "family=band:theta=1,Theta=2",
            "u=0.5*x1^2-0.5*x2^2",
            "x=0,0",
            "expect=converges",
        ]
        .iter()
        .enumerate()
        {
            cfg.set_arg(i + 1, a).unwrap();
        }
        let o = run_experiment(&cfg).unwrap();
        assert!(o.matched, "{}", o.summary);
        assert!(o.summary.contains("target: -1"), "{}", o.summary);
    }

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
    }
}
