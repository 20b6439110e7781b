//! Named experiment suites with machine-readable reports.
//!
//! Every suite returns a [`ReportBundle`]: a JSON document, CSV tables and
//! (x, y) series, all numeric cells tagged with their certificate level.
//! Checks marked certified fail the run; measured checks are only logged.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{invalid, Error, Result};
use crate::func_core::{ActivationKind, FunctionHandle, Grid, PNorm};
use crate::gliding_hump::{assemble_counterexample, build_schedule, sharpness_report, ErrorFunctionalFamily};
use crate::network_approx::{
    best_network, exp_sum_to_network, nearly_exp_params, nearly_exp_pipeline, poly_to_network_derivative_trick,
    remez_poly, ExpSum, FitOptions,
};
use crate::resonance::{sine_resonance, verify_resonance_gap, CompetitorSpace, GapArgument, ResonanceFamily};
use crate::smoothness::{endpoint_limit_value, modulus, modulus_endpoint_limit, AbstractModulus, RateFunctions};
use crate::spline_approx::{
    best_piecewise_constant, best_piecewise_linear, grid_error, linear_interpolant, monomial_lower_bound, Certificate,
    Witness,
};
use crate::zeros_vc::{
    corollary4_budget, log_budget_faktor_holds, monte_carlo_caps, shatter_check, vc_lower_bound, alternating_zeros,
    SearchBudget, ShatterOutcome, SpaceDescriptor,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteInfo {
    pub name: &'static str,
    pub statement: &'static str,
    pub summary: &'static str,
    /// whether `--kind` means anything for this suite
    #[serde(skip)]
    pub takes_kind: bool,
}

const SUITES: [SuiteInfo; 9] = [
    SuiteInfo {
        name: "debao",
        statement: "(d1)",
        summary: "exact Heaviside errors against the first modulus at 1/n",
        takes_kind: false,
    },
    SuiteInfo {
        name: "spline-sharpness",
        statement: "Corollary 1 (Free Knot Spline Approximation)",
        summary: "monomial lower bounds and the sine resonance gap for step splines",
        takes_kind: false,
    },
    SuiteInfo {
        name: "arctan-sharpness",
        statement: "Corollary 2 (Inverse Tangent)",
        summary: "derivative-quotient lifting of Remez polynomials and the sine gap for arctan networks",
        takes_kind: true,
    },
    SuiteInfo {
        name: "gliding-hump",
        statement: "Theorem 3 (Adapted Uniform Boundedness Principle)",
        summary: "hump schedule, counterexample and its sharpness report",
        takes_kind: true,
    },
    SuiteInfo {
        name: "anti-inverse",
        statement: "Section 2 (failure of the inverse estimate)",
        summary: "moduli of e^{-nx} stay large while two logistic terms approximate it",
        takes_kind: false,
    },
    SuiteInfo {
        name: "nearly-exp",
        statement: "Theorem 1 (nearly exponential function)",
        summary: "one rescaled logistic copy against e^x on [-40, 0], and the full pipeline",
        takes_kind: false,
    },
    SuiteInfo {
        name: "vc-logistic",
        statement: "Corollary 4 (Logistic Function)",
        summary: "budget arithmetic, exact shattering and general logistic zero caps",
        takes_kind: false,
    },
    SuiteInfo {
        name: "uniform-logistic",
        statement: "Corollary 5 (Logistic Function with Restriction)",
        summary: "zero caps and shattering search for shared-slope logistic networks",
        takes_kind: false,
    },
    SuiteInfo {
        name: "elu",
        statement: "Corollary 6 (Coarse estimate for ELU activation)",
        summary: "ELU zero caps against the zeros forced by shattering",
        takes_kind: false,
    },
];

/// Registry in stable order.
pub fn list_suites() -> &'static [SuiteInfo] {
    &SUITES
}

pub fn suite_info(name: &str) -> Option<&'static SuiteInfo> {
    SUITES.iter().find(|s| s.name == name)
}

const MAX_GRID: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: String,
    pub kind: Option<String>,
    pub p: PNorm,
    pub r: usize,
    pub omega: String,
    pub grid: usize,
    pub restarts: usize,
    pub seed: u64,
    #[serde(rename = "K", alias = "k")]
    pub k: usize,
    pub n_max: Option<usize>,
    pub eps: Option<f64>,
    pub cap: u64,
    /// VC budget constant E
    pub e: f64,
    #[serde(skip_serializing)]
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            suite: String::new(),
            kind: None,
            p: PNorm::Infinity,
            r: 1,
            omega: "power:0.5".into(),
            grid: 4096,
            restarts: 8,
            seed: 0,
            k: 5,
            n_max: None,
            eps: None,
            cap: crate::gliding_hump::DEFAULT_INDEX_CAP,
            e: 2.0,
            out: None,
        }
    }
}

/// Config with every field parsed.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub info: &'static SuiteInfo,
    pub kind: Option<ActivationKind>,
    pub omega: AbstractModulus,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<Resolved> {
        let info = suite_info(&self.suite).ok_or_else(|| {
            let names: Vec<&str> = SUITES.iter().map(|s| s.name).collect();
            Error::InvalidArgument(format!("unknown suite '{}' (known: {})", self.suite, names.join(", ")))
        })?;
        let kind = self.kind.as_deref().map(ActivationKind::parse).transpose()?;
        if kind.is_some() && !info.takes_kind {
            return invalid(format!("suite '{}' does not take an activation kind", info.name));
        }
        let omega = AbstractModulus::parse(&self.omega)?;
        omega.validate()?;
        if !(16..=MAX_GRID).contains(&self.grid) {
            return invalid(format!("grid must be in 16..={MAX_GRID}, got {}", self.grid));
        }
        if !(1..=4).contains(&self.r) {
            return invalid(format!("r must be in 1..=4, got {}", self.r));
        }
        if self.restarts == 0 || self.k == 0 {
            return invalid("restarts and K must be at least 1");
        }
        if self.n_max == Some(0) {
            return invalid("n-max must be at least 1");
        }
        if let Some(e) = self.eps {
            if !(e > 0.0 && e < 1.0) {
                return invalid(format!("eps must be in (0, 1), got {e}"));
            }
        }
        if self.cap < 2 {
            return invalid("cap must be at least 2");
        }
        if !(self.e > 1.0 && self.e.is_finite()) {
            return invalid(format!("E must be finite and > 1, got {}", self.e));
        }
        Ok(Resolved { info, kind, omega })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Key(String),
    Num { value: f64, certificate: Certificate },
}

fn key(s: impl ToString) -> Cell {
    Cell::Key(s.to_string())
}

fn exact(v: f64) -> Cell {
    Cell::Num {
        value: v,
        certificate: Certificate::ExactOnGrid,
    }
}

fn upper(v: f64) -> Cell {
    Cell::Num {
        value: v,
        certificate: Certificate::UpperBound,
    }
}

fn analytic(v: f64) -> Cell {
    Cell::Num {
        value: v,
        certificate: Certificate::Analytic,
    }
}

fn tagged(v: f64, c: Certificate) -> Cell {
    Cell::Num { value: v, certificate: c }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric value of a cell, for tests and summaries.
    pub fn value(&self, row: usize, column: &str) -> Option<f64> {
        match self.rows.get(row)?.get(self.column(column)?)? {
            Cell::Num { value, .. } => Some(*value),
            Cell::Key(_) => None,
        }
    }

    /// CSV with header cells `name[certificate]` for numeric columns.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<String> = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, c)| match self.rows.first().and_then(|r| r.get(j)) {
                Some(Cell::Num { certificate, .. }) => format!("{c}[{}]", certificate.tag()),
                _ => c.clone(),
            })
            .collect();
        w.write_record(&header).map_err(csv_err)?;
        for row in &self.rows {
            let rec: Vec<String> = row
                .iter()
                .map(|c| match c {
                    Cell::Key(s) => s.clone(),
                    Cell::Num { value, .. } => value.to_string(),
                })
                .collect();
            w.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub name: String,
    pub certificate: Certificate,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn to_text(&self) -> String {
        let mut s = format!("# {} [{}]\n", self.name, self.certificate.tag());
        for (x, y) in &self.points {
            let _ = writeln!(s, "{x} {y}");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub certified: bool,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportBundle {
    pub suite: String,
    pub statement: String,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub tables: Vec<Table>,
    pub series: Vec<Series>,
    /// suite-specific payload
    pub details: Value,
}

impl ReportBundle {
    fn new(cfg: &ExperimentConfig, info: &SuiteInfo) -> Self {
        ReportBundle {
            suite: info.name.into(),
            statement: info.statement.into(),
            config: cfg.clone(),
            checks: vec![],
            notes: vec![],
            tables: vec![],
            series: vec![],
            details: Value::Null,
        }
    }

    fn check(&mut self, name: &str, certified: bool, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            certified,
            passed,
            detail: detail.into(),
        });
    }

    /// Certified checks that failed.
    pub fn violations(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| c.certified && !c.passed).collect()
    }

    pub fn ok(&self) -> bool {
        self.violations().is_empty()
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Writes `<dir>/<suite>/report.json`, one CSV per table and one `.xy`
    /// file per series; returns the suite directory.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let root = dir.join(&self.suite);
        fs::create_dir_all(&root)?;
        fs::write(root.join("report.json"), self.to_json()?)?;
        for t in &self.tables {
            fs::write(root.join(format!("{}.csv", t.name)), t.to_csv()?)?;
        }
        for s in &self.series {
            fs::write(root.join(format!("{}.xy", s.name)), s.to_text())?;
        }
        Ok(root)
    }
}

/// Test functions shared by the bound suites.
pub fn default_test_functions() -> Vec<FunctionHandle> {
    vec![
        FunctionHandle::new("x", |x| x),
        FunctionHandle::new("x^2", |x| x * x),
        FunctionHandle::new("|x-1/2|", |x| (x - 0.5).abs()),
        FunctionHandle::new("sin(2pi x)", |x| (2.0 * std::f64::consts::PI * x).sin()),
        FunctionHandle::new("sqrt(x)", |x: f64| x.sqrt()),
        FunctionHandle::new("exp(-5x)", |x: f64| (-5.0 * x).exp()),
        FunctionHandle::new("spline3", |x| linear_interpolant(&[0.0, 1.0, 0.25, 0.75], x)),
    ]
}

/// Validates the config and runs the suite. Certified failures are listed
/// in the bundle's checks; errors mean the suite could not run.
pub fn run_suite(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let res = cfg.validate()?;
    let mut b = ReportBundle::new(cfg, res.info);
    match res.info.name {
        "debao" => debao(cfg, &mut b)?,
        "spline-sharpness" => spline_sharpness(cfg, &mut b)?,
        "arctan-sharpness" => arctan_sharpness(cfg, &res, &mut b)?,
        "gliding-hump" => gliding(cfg, &res, &mut b)?,
        "anti-inverse" => anti_inverse(cfg, &mut b)?,
        "nearly-exp" => nearly_exp(cfg, &mut b)?,
        "vc-logistic" => vc_logistic(cfg, &mut b)?,
        "uniform-logistic" => uniform_logistic(cfg, &mut b)?,
        "elu" => elu(cfg, &mut b)?,
        _ => unreachable!("registry and dispatch disagree"),
    }
    Ok(b)
}

fn debao(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<()> {
    let grid = Grid::uniform(cfg.grid)?;
    let n_max = cfg.n_max.unwrap_or(32);
    if n_max >= cfg.grid {
        return invalid("n-max must stay below the grid cell count");
    }
    let fns = default_test_functions();
    let jobs: Vec<(usize, usize)> = (0..fns.len()).flat_map(|i| (1..=n_max).map(move |n| (i, n))).collect();
    let rows: Vec<(usize, usize, f64, f64)> = jobs
        .par_iter()
        .map(|&(i, n)| {
            // n Heaviside terms realize exactly the step functions with n pieces
            let e = best_piecewise_constant(&fns[i], n, PNorm::Infinity, &grid)?.error;
            let w = modulus(&fns[i], 1, 1.0 / n as f64, PNorm::Infinity, &grid)?;
            Ok((i, n, e, w))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("ratios", &["function", "n", "error", "omega1", "ratio"]);
    let mut worst = 0.0f64;
    let mut failures = vec![];
    for &(i, n, e, w) in &rows {
        let ratio = if w > 0.0 { e / w } else if e == 0.0 { 0.0 } else { f64::INFINITY };
        worst = worst.max(ratio);
        if e > w {
            failures.push(format!("{} n={n}: {e} > {w}", fns[i].label()));
        }
        t.rows.push(vec![key(fns[i].label()), key(n), exact(e), exact(w), exact(ratio)]);
    }
    for (i, f) in fns.iter().enumerate() {
        b.series.push(Series {
            name: format!("ratio-{}", slug(f.label())),
            certificate: Certificate::ExactOnGrid,
            points: rows
                .iter()
                .filter(|r| r.0 == i)
                .map(|r| (r.1 as f64, if r.3 > 0.0 { r.2 / r.3 } else { 0.0 }))
                .collect(),
        });
    }
    b.check(
        "error-below-modulus",
        true,
        failures.is_empty(),
        if failures.is_empty() {
            format!("max ratio {worst}")
        } else {
            failures.join("; ")
        },
    );
    b.details = json!({ "n_max": n_max, "max_ratio": worst });
    b.tables.push(t);
    Ok(())
}

fn slug(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    while s.contains("--") {
        s = s.replace("--", "-");
    }
    s.trim_matches('-').to_string()
}

fn spline_sharpness(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<()> {
    let grid = Grid::uniform(cfg.grid)?;
    let n_max = cfg.n_max.unwrap_or(8);
    let jobs: Vec<(usize, usize)> = (1..=2).flat_map(|r| (1..=n_max).map(move |n| (r, n))).collect();
    let rows: Vec<(usize, usize, f64, f64)> = jobs
        .par_iter()
        .map(|&(r, n)| {
            let f = FunctionHandle::new(format!("x^{r}"), move |x: f64| x.powi(r as i32));
            let e = if r == 1 {
                best_piecewise_constant(&f, n, PNorm::Infinity, &grid)?.error
            } else {
                best_piecewise_linear(&f, n, PNorm::Infinity, &grid)?.error
            };
            Ok((r, n, e, monomial_lower_bound(r, n, PNorm::Infinity)?))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("monomial", &["r", "n", "error", "lower", "c_measured"]);
    let mut below = vec![];
    for &(r, n, e, lo) in &rows {
        if e < lo {
            below.push(format!("r={r} n={n}: {e} < {lo}"));
        }
        t.rows.push(vec![key(r), key(n), exact(e), analytic(lo), exact(e * (n as f64).powi(r as i32))]);
    }
    for r in 1..=2 {
        b.series.push(Series {
            name: format!("monomial-c-r{r}"),
            certificate: Certificate::ExactOnGrid,
            points: rows
                .iter()
                .filter(|x| x.0 == r)
                .map(|x| (x.1 as f64, x.2 * (x.1 as f64).powi(r as i32)))
                .collect(),
        });
    }
    b.check("monomial-lower-bound", true, below.is_empty(), below.join("; "));
    b.tables.push(t);

    // sine resonance against step splines with fewer than N sign changes
    let mut gap = Table::new(
        "sine-gap",
        &["N", "dp_error", "sup_bound", "sup_min", "l2_bound", "l2_min", "checked"],
    );
    let mut dp_fail = vec![];
    for big_n in 1..=8usize {
        let h = sine_resonance(big_n)?;
        let g = Grid::uniform(512 * 8 * big_n)?;
        let dp = best_piecewise_constant(&h, big_n, PNorm::Infinity, &g)?.error;
        let arg = GapArgument::SineSignChanges { frequency: big_n };
        let space = CompetitorSpace::StepSplines { pieces: big_n };
        let sup = verify_resonance_gap(&h, &arg, &space, PNorm::Infinity, &g, 200, cfg.seed)?;
        let l2 = verify_resonance_gap(&h, &arg, &space, PNorm::Finite(2.0), &g, 200, cfg.seed)?;
        if dp < sup.bound - 1e-9 {
            dp_fail.push(format!("N={big_n}: {dp}"));
        }
        gap.rows.push(vec![
            key(big_n),
            exact(dp),
            analytic(sup.bound),
            exact(sup.min_distance),
            analytic(l2.bound),
            exact(l2.min_distance),
            key(sup.checked + l2.checked),
        ]);
    }
    b.check("sine-gap-dp", true, dp_fail.is_empty(), dp_fail.join("; "));
    b.check("sine-gap-random", true, true, "no random competitor came closer than the bound");
    b.tables.push(gap);
    Ok(())
}

fn arctan_sharpness(cfg: &ExperimentConfig, res: &Resolved, b: &mut ReportBundle) -> Result<()> {
    let kind = res.kind.unwrap_or(ActivationKind::Arctan);
    let eps = cfg.eps.unwrap_or(1e-3);
    let grid = Grid::uniform(cfg.grid)?;
    let mut targets = vec![FunctionHandle::new("exp(x)", f64::exp)];
    targets.extend(default_test_functions());
    let degree = 3;
    let mut t = Table::new("lifting", &["function", "remez_error", "trick_deviation", "network_error", "budget"]);
    let mut fails = vec![];
    let rows: Vec<(String, f64, f64, f64, Certificate)> = targets
        .par_iter()
        .map(|f| {
            let rz = remez_poly(f, degree, &grid)?;
            let tr = poly_to_network_derivative_trick(&rz.poly, kind, eps)?;
            let err = grid_error(f, &Witness::Network(tr.network), PNorm::Infinity, &grid)?;
            Ok((f.label().to_string(), rz.error, tr.deviation, err, rz.certified))
        })
        .collect::<Result<_>>()?;
    for (label, rz, dev, err, cert) in rows {
        if err > rz + eps {
            fails.push(format!("{label}: {err} > {rz} + {eps}"));
        }
        t.rows.push(vec![key(&label), tagged(rz, cert), upper(dev), upper(err), analytic(rz + eps)]);
    }
    b.check("lift-within-budget", true, fails.is_empty(), fails.join("; "));
    b.tables.push(t);

    // sine resonance against random n-term networks of this kind
    let n_max = cfg.n_max.unwrap_or(3);
    let mut gap = Table::new("sine-gap", &["n", "N", "bound", "min_distance", "checked", "skipped"]);
    let mut series = vec![];
    for n in 1..=n_max {
        let freq = 2 * (4 * n + 1);
        let h = sine_resonance(freq)?;
        let g = Grid::uniform(64 * freq)?;
        let r = verify_resonance_gap(
            &h,
            &GapArgument::SineSignChanges { frequency: freq },
            &CompetitorSpace::Networks { kind, n },
            PNorm::Infinity,
            &g,
            200,
            cfg.seed,
        )?;
        series.push((n as f64, r.min_distance));
        gap.rows.push(vec![key(n), key(freq), analytic(r.bound), exact(r.min_distance), key(r.checked), key(r.skipped)]);
    }
    b.check("sine-gap-random", true, true, "no random competitor came closer than the bound");
    b.series.push(Series {
        name: "gap-min-distance".into(),
        certificate: Certificate::ExactOnGrid,
        points: series,
    });
    b.tables.push(gap);
    b.details = json!({ "kind": kind.to_string(), "degree": degree, "eps": eps });
    Ok(())
}

fn gliding(cfg: &ExperimentConfig, res: &Resolved, b: &mut ReportBundle) -> Result<()> {
    let kind = res.kind.unwrap_or(ActivationKind::Heaviside);
    if !res.omega.satisfies_odd() {
        return invalid(format!("{} does not grow faster than linear at 0", res.omega.label()));
    }
    let family = ResonanceFamily::sine(1, cfg.r, PNorm::Infinity)?;
    let rates = RateFunctions::polynomial(cfg.r as f64);
    let efam = match kind {
        ActivationKind::Heaviside => ErrorFunctionalFamily::FreeKnotSteps,
        k => ErrorFunctionalFamily::Network {
            kind: k,
            restarts: cfg.restarts,
            seed: cfg.seed,
            max_cells: cfg.grid,
        },
    };
    let (schedule, err) = build_schedule(&family, &efam, &res.omega, &rates, cfg.k, cfg.cap);
    let mut steps = Table::new("steps", &["k", "index", "gap", "dominance", "tail", "slack", "sample_cells"]);
    for s in &schedule.steps {
        steps.rows.push(vec![
            key(s.k),
            key(s.index),
            analytic(s.margins.gap),
            analytic(s.margins.dominance),
            analytic(s.margins.tail),
            tagged(s.margins.slack.unwrap_or(f64::NAN), efam.certificate()),
            key(s.sample_cells),
        ]);
    }
    b.tables.push(steps);
    let margins_ok = schedule.steps.iter().all(|s| s.margins.all_nonnegative());
    b.check("margins-nonnegative", true, margins_ok, "");
    b.check(
        "schedule-complete",
        true,
        err.is_none(),
        match &err {
            Some(e) => format!("{e}; depth {} of {}", schedule.depth(), cfg.k),
            None => format!("depth {}", schedule.depth()),
        },
    );
    if schedule.depth() == 0 {
        return Ok(());
    }
    let cx = assemble_counterexample(&schedule, &family, &res.omega, &rates)?;
    let deltas: Vec<i32> = (2..=12).collect();
    let report = sharpness_report(&cx, &schedule, &family, &efam, &res.omega, &deltas)?;
    let mut rows = Table::new("rows", &["k", "index", "weight", "certified", "measured", "measured_upper"]);
    for r in &report.rows {
        rows.rows.push(vec![
            key(r.k),
            key(r.index),
            analytic(r.weight),
            analytic(r.certified),
            tagged(r.measured.unwrap_or(f64::NAN), efam.certificate()),
            upper(r.measured_upper),
        ]);
    }
    let mut sm = Table::new("smoothness", &["delta", "modulus", "ratio", "reference"]);
    for s in &report.smoothness {
        sm.rows.push(vec![
            key(s.delta),
            exact(s.modulus),
            exact(s.ratio),
            analytic(report.smoothness_reference),
        ]);
    }
    b.series.push(Series {
        name: "smoothness-ratio".into(),
        certificate: Certificate::ExactOnGrid,
        points: report.smoothness.iter().map(|s| (s.delta, s.ratio)).collect(),
    });
    b.tables.push(rows);
    b.tables.push(sm);
    b.check("measured-above-certified", true, report.consistent(), "");
    b.check("smoothness-within-reference", true, report.smoothness_within_reference(), "");
    let live = report.certified_rows().count();
    b.check("non-vacuous-rows", false, live >= 2, format!("{live} rows with a positive certified bound"));
    b.details = json!({
        "error_family": report.error_family,
        "indices": schedule.indices,
        "weights": schedule.weights,
        "tail_bound": report.tail_bound,
        "next_candidate": cx.next_candidate,
        "sample_cells": report.sample_cells,
    });
    Ok(())
}

fn anti_inverse(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<()> {
    let grid = Grid::uniform(cfg.grid)?;
    let n_max = cfg.n_max.unwrap_or(10);
    let fit_grid = Grid::uniform(cfg.grid.min(1024))?;
    let rows: Vec<(usize, f64, f64, f64, f64, f64)> = (1..=n_max)
        .into_par_iter()
        .map(|n| {
            let nf = n as f64;
            let f = FunctionHandle::new(format!("exp(-{n}x)"), move |x: f64| (-nf * x).exp());
            let w1 = modulus(&f, 1, 1.0 / nf, PNorm::Infinity, &grid)?;
            let w2 = modulus(&f, 2, 1.0 / nf, PNorm::Infinity, &grid)?;
            let lifted = exp_sum_to_network(
                &ExpSum {
                    gamma0: 0.0,
                    terms: vec![(1.0, -nf)],
                },
                1e-4,
            )?;
            let opts = FitOptions {
                restarts: cfg.restarts,
                seed: cfg.seed,
                uniform_scale: false,
                warm_starts: vec![lifted.network.clone()],
            };
            let fit = best_network(&f, 2, ActivationKind::Logistic, PNorm::Infinity, &fit_grid, &opts)?;
            let fit_err = grid_error(&f, &fit.witness, PNorm::Infinity, &grid)?;
            Ok((n, w1, w2, lifted.bound, fit_err, fit.error))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(
        "moduli",
        &["n", "omega1", "omega2", "construction_bound", "network_error", "implied_c1"],
    );
    let mut low = vec![];
    for &(n, w1, w2, bound, err, _) in &rows {
        // the endpoint difference needs r steps of 1/n inside [0, 1]
        for (r, w) in [(1, w1), (2, w2)].into_iter().filter(|&(r, _)| r <= n) {
            let floor = endpoint_limit_value(r) - 1e-6;
            if w < floor {
                low.push(format!("n={n} r={r}: {w} < {floor}"));
            }
        }
        t.rows.push(vec![key(n), exact(w1), exact(w2), analytic(bound), upper(err), upper(w1 / err.max(bound))]);
    }
    b.check("moduli-stay-large", true, low.is_empty(), low.join("; "));
    let worst_bound = rows.iter().map(|r| r.3).fold(0.0, f64::max);
    b.check("construction-below-1e-3", true, worst_bound <= 1e-3, format!("max analytic bound {worst_bound}"));
    let worst_fit = rows.iter().map(|r| r.4).fold(0.0, f64::max);
    b.check("fit-below-1e-3", false, worst_fit <= 1e-3, format!("max grid error {worst_fit}"));
    b.series.push(Series {
        name: "implied-constant".into(),
        certificate: Certificate::UpperBound,
        points: rows.iter().map(|r| (r.0 as f64, r.1 / r.4.max(r.3))).collect(),
    });
    b.tables.push(t);

    let mut lim = Table::new("endpoint-limit", &["n", "value", "limit", "relative_gap"]);
    let mut monotone = true;
    for r in 1..=2usize {
        let mut prev = f64::INFINITY;
        for j in (r.trailing_zeros() as usize + 1)..=10 {
            let n = 1usize << j;
            let v = modulus_endpoint_limit(r, n)?;
            let l = endpoint_limit_value(r);
            if v > prev {
                monotone = false;
            }
            prev = v;
            lim.rows.push(vec![key(format!("{r}:{n}")), analytic(v), analytic(l), analytic((v - l).abs() / l)]);
        }
    }
    b.check("endpoint-limit-monotone", true, monotone, "");
    b.tables.push(lim);
    Ok(())
}

fn nearly_exp(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<()> {
    let eps_list = match cfg.eps {
        Some(e) => vec![e],
        None => vec![1e-1, 1e-3, 1e-6],
    };
    let lattice: Vec<f64> = (0..10_000).map(|i| -40.0 * i as f64 / 9_999.0).collect();
    let mut t = Table::new("single-copy", &["eps", "c", "bound", "measured"]);
    let mut fails = vec![];
    for &eps in &eps_list {
        let q = nearly_exp_params(eps)?;
        let dev: Vec<(f64, f64)> = lattice
            .iter()
            .map(|&x| (x, (q.a * crate::func_core::logistic(q.b * x + q.c) + q.d - x.exp()).abs()))
            .collect();
        let sup = dev.iter().map(|d| d.1).fold(0.0, f64::max);
        if !(sup <= q.bound && q.bound < eps) {
            fails.push(format!("eps={eps}: sup {sup}, bound {}", q.bound));
        }
        t.rows.push(vec![key(eps), analytic(q.c), analytic(q.bound), exact(sup)]);
        b.series.push(Series {
            name: format!("deviation-eps{eps:e}"),
            certificate: Certificate::ExactOnGrid,
            points: dev.iter().step_by(20).cloned().collect(),
        });
    }
    b.check("bound-below-eps", true, fails.is_empty(), fails.join("; "));
    b.tables.push(t);

    let grid = Grid::uniform(cfg.grid.min(2048))?;
    let n = cfg.n_max.unwrap_or(4);
    let eps = eps_list[0].min(1e-3);
    let mut pipe = Table::new(
        "pipeline",
        &["function", "alpha", "poly_error", "substitution", "lift", "total_bound", "rounding", "measured"],
    );
    let mut over = vec![];
    let fns = default_test_functions();
    let rows: Vec<_> = fns
        .par_iter()
        .map(|f| nearly_exp_pipeline(f, n, eps, &grid).map(|r| (f.label().to_string(), r)))
        .collect::<Result<_>>()?;
    for (label, r) in rows {
        let rounding = rounding_allowance(&r.network, &grid);
        if r.measured > r.total_bound + rounding {
            over.push(format!("{label}: {} > {} + {rounding}", r.measured, r.total_bound));
        }
        pipe.rows.push(vec![
            key(&label),
            key(r.alpha),
            exact(r.poly_error),
            exact(r.substitution_error),
            analytic(r.lift_bound),
            exact(r.total_bound),
            upper(rounding),
            exact(r.measured),
        ]);
    }
    b.check("pipeline-within-bound", false, over.is_empty(), over.join("; "));
    b.tables.push(pipe);
    b.details = json!({ "terms": n, "pipeline_eps": eps });
    Ok(())
}

/// First-order floating-point error of evaluating the network: large
/// coefficients times exponentials at large arguments cancel.
fn rounding_allowance(net: &crate::func_core::RidgeNetwork, grid: &Grid) -> f64 {
    grid.points()
        .iter()
        .map(|&x| {
            net.terms
                .iter()
                .map(|t| {
                    let y = t.b * x + t.c;
                    (t.a * crate::func_core::eval_activation(net.kind, y)).abs() * (y.abs() + 4.0)
                })
                .sum::<f64>()
                * f64::EPSILON
        })
        .fold(0.0, f64::max)
}

fn shatter_table(report: &crate::zeros_vc::ShatterReport) -> Vec<Value> {
    report
        .patterns
        .iter()
        .map(|p| json!({ "signs": p.signs, "outcome": p.outcome }))
        .collect()
}

fn vc_logistic(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<()> {
    let n_max = cfg.n_max.unwrap_or(1024).max(4);
    let mut t = Table::new("budget", &["n", "D", "tau", "c", "line5", "line6", "alphacond_lhs", "alphacond_rhs"]);
    let mut fails = vec![];
    let mut margin = vec![];
    for n in 4..=n_max {
        let bud = corollary4_budget(n, cfg.e)?;
        if !(bud.chain.holds && bud.alphacond_holds) {
            fails.push(format!("n={n}"));
        }
        margin.push((n as f64, bud.chain.lines[5] - bud.chain.lines[4]));
        if n.is_power_of_two() || n == n_max {
            t.rows.push(vec![
                key(n),
                key(bud.d),
                key(bud.tau),
                analytic(bud.c),
                analytic(bud.chain.lines[4]),
                analytic(bud.chain.lines[5]),
                key(bud.alphacond_lhs),
                analytic(bud.alphacond_rhs),
            ]);
        }
    }
    b.check("chain-and-alphacond", true, fails.is_empty(), fails.join(", "));
    let faktor = [(0.5, 5.0), (0.25, 17.0), (0.1, 101.0), (0.5, 1e6)]
        .iter()
        .all(|&(l, x)| log_budget_faktor_holds(l, x));
    b.check("faktor", true, faktor, "");
    b.series.push(Series {
        name: "chain-margin".into(),
        certificate: Certificate::Analytic,
        points: margin,
    });
    b.tables.push(t);

    let budget = SearchBudget {
        restarts: cfg.restarts,
        evals: 1500,
        seed: cfg.seed,
    };
    let pts = [0.0, 0.5, 1.0];
    let h1 = vc_lower_bound(&SpaceDescriptor::Heaviside { n: 1 }, &pts, 3, &budget)?;
    let consts = vc_lower_bound(&SpaceDescriptor::Constants, &pts, 3, &budget)?;
    b.check(
        "heaviside-shatters-two",
        true,
        h1.m == 2 && h1.patterns.len() == 4 && h1.patterns.iter().all(|p| p.outcome.achieved()),
        format!("m = {}", h1.m),
    );
    b.check("constants-vc-one", true, consts.m == 1, format!("m = {}", consts.m));
    let mc = monte_carlo_caps("logistic", 300, 3, cfg.seed)?;
    b.check("logistic-zero-cap", true, true, format!("max {mc} sign changes over 300 networks with n <= 3"));
    b.details = json!({
        "E": cfg.e,
        "heaviside_1": { "m": h1.m, "shattered": h1.shattered, "patterns": shatter_table(&h1) },
        "constants": { "m": consts.m, "exact": consts.exact },
        "logistic_max_sign_changes": mc,
    });
    Ok(())
}

fn uniform_logistic(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<()> {
    let mc = monte_carlo_caps("uniform-logistic", 500, 5, cfg.seed)?;
    b.check("uniform-zero-cap", true, true, format!("max {mc} sign changes over 500 networks with n <= 5"));
    let budget = SearchBudget {
        restarts: cfg.restarts,
        evals: 1500,
        seed: cfg.seed,
    };
    let n_max = cfg.n_max.unwrap_or(2);
    let mut t = Table::new("shatter", &["n", "tau", "m_found", "budget_exhausted"]);
    let mut found_tau = vec![];
    let mut details = vec![];
    for n in 1..=n_max {
        let tau = 2 * n + 2;
        let grid: Vec<f64> = (0..=tau).map(|j| j as f64 / tau as f64).collect();
        let sp = SpaceDescriptor::Smooth {
            kind: ActivationKind::Logistic,
            n,
            uniform_scale: true,
            with_constant: false,
        };
        let r = vc_lower_bound(&sp, &grid, tau, &budget)?;
        if r.m >= tau {
            found_tau.push(format!("n={n}"));
        }
        t.rows.push(vec![key(n), key(tau), key(r.m), key(r.budget_exhausted)]);
        details.push(json!({ "n": n, "m": r.m, "shattered": r.shattered }));
    }
    // a shattered tau-set would give a shared-slope network with too many zeros
    b.check("no-shattered-tau-set", true, found_tau.is_empty(), found_tau.join(", "));
    b.tables.push(t);

    // zeros from the alternating pattern, found with free slopes
    let free = SpaceDescriptor::Smooth {
        kind: ActivationKind::Logistic,
        n: 2,
        uniform_scale: false,
        with_constant: true,
    };
    let pts = [0.0, 1.0 / 3.0, 2.0 / 3.0];
    let zeros = match shatter_check(&free, &pts, &[1.0, -1.0, 1.0], &budget)? {
        ShatterOutcome::Achievable { witness } => Some(alternating_zeros(&witness, &pts)?),
        _ => None,
    };
    b.check("alternation-zeros", false, zeros.is_some(), format!("{zeros:?}"));
    b.details = json!({ "max_sign_changes": mc, "searches": details, "alternation_zeros": zeros });
    Ok(())
}

fn elu(cfg: &ExperimentConfig, b: &mut ReportBundle) -> Result<()> {
    let mc = monte_carlo_caps("elu", 200, 3, cfg.seed)?;
    b.check("elu-zero-cap", true, true, format!("max {mc} sign changes over 200 networks with n <= 3"));
    let n_max = cfg.n_max.unwrap_or(16).max(2);
    let mut t = Table::new("zeros", &["n", "tau", "forced_zeros", "cap", "alpha_lhs", "alpha_rhs"]);
    let mut fails = vec![];
    let mut pts = vec![];
    for n in 2..=n_max as u64 {
        let tau = 8 * n * n;
        let forced = tau / 2;
        let cap = (n + 1) * (n + 1);
        let lhs = 8 * (4 * n) * (4 * n);
        let rhs = 128.0 * (n * n) as f64;
        if !(forced > cap && lhs as f64 == rhs) {
            fails.push(format!("n={n}"));
        }
        pts.push((n as f64, forced as f64 / cap as f64));
        t.rows.push(vec![key(n), key(tau), key(forced), key(cap), key(lhs), analytic(rhs)]);
    }
    b.check("forced-zeros-exceed-cap", true, fails.is_empty(), fails.join(", "));
    b.series.push(Series {
        name: "forced-over-cap".into(),
        certificate: Certificate::Analytic,
        points: pts,
    });
    b.tables.push(t);
    b.details = json!({ "max_sign_changes": mc });
    Ok(())
}
