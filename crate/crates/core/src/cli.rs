//! The `sflab` command line: experiment configs, dispatch, records and reports.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use rayon::prelude::*;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::dirschrod::{sf_index_verify_gauged, VerifyRecord, DEFAULT_MU, DEFAULT_TOL};
use crate::family::{endpoint_signature_sf, evaluate, FamilySpec, DEFAULT_GUARD};
use crate::grid::Grid;
use crate::spectral_flow::{eigen_traces_with_guard, spectral_flow, write_trace_csv};
use crate::suites::{self, SuiteOutcome};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "sflab",
    version,
    about = "Spectral flow, APS indices and operator identity checks"
)]
pub struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Record file; without it records go to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads; defaults to the number of processors.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Relative rank tolerance for index decisions.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Sf,
    Index,
    Verify,
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default, deserialize_with = "family_field")]
    pub family: Option<FamilySpec>,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(rename = "R", default = "default_r")]
    pub r: f64,
    #[serde(rename = "R_list", default)]
    pub r_list: Option<Vec<f64>>,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(rename = "N_list", default)]
    pub n_list: Option<Vec<usize>>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_guard")]
    pub guard: f64,
    #[serde(default = "default_mu")]
    pub mu: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Gauge window for `index` and `sweep`; ungauged when absent.
    #[serde(default)]
    pub window: Option<(f64, f64)>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: Format,
}

fn default_lambda() -> f64 {
    4.0
}
fn default_r() -> f64 {
    8.0
}
fn default_n() -> usize {
    2000
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_guard() -> f64 {
    DEFAULT_GUARD
}
fn default_mu() -> Vec<f64> {
    DEFAULT_MU.to_vec()
}
fn default_format() -> Format {
    Format::Json
}

pub fn family_preset(name: &str) -> Option<FamilySpec> {
    match name {
        "diag-pair" => Some(FamilySpec::diag_pair()),
        "pauli-well" => Some(FamilySpec::pauli_well()),
        _ => None,
    }
}

fn family_field<'de, D: Deserializer<'de>>(d: D) -> Result<Option<FamilySpec>, D::Error> {
    match Option::<serde_json::Value>::deserialize(d)? {
        None => Ok(None),
        Some(serde_json::Value::String(name)) => family_preset(&name)
            .map(Some)
            .ok_or_else(|| D::Error::custom(format!("unknown preset `{name}` (expected diag-pair or pauli-well)"))),
        Some(v) => serde_path_to_error::deserialize(v).map(Some).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                D::Error::custom(e.into_inner())
            } else {
                D::Error::custom(format!("{path}: {}", e.into_inner()))
            }
        }),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Flags take precedence over config keys.
    pub fn apply_flags(&mut self, args: &Args) -> Result<(), ConfigError> {
        if let Some(out) = &args.out {
            self.out = Some(out.clone());
        }
        if let Some(f) = args.format {
            self.format = f;
        }
        if let Some(s) = args.seed {
            self.seed = s;
        }
        if let Some(t) = args.tol {
            self.tol = t;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.command != Command::Verify && self.family.is_none() {
            return bad("`family` is required for this command".into());
        }
        let lambdas = self.lambda_values();
        let radii = self.r_values();
        let sizes = self.n_values();
        if lambdas.is_empty() || radii.is_empty() || sizes.is_empty() || self.mu.is_empty() {
            return bad("empty parameter list: nothing to run".into());
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return bad(format!("lambda must be positive, got {l}"));
        }
        if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return bad(format!("R must be positive, got {r}"));
        }
        if let Some(n) = sizes.iter().find(|n| **n < 2) {
            return bad(format!("N must be at least 2, got {n}"));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-3) {
            return bad(format!("tol must lie in (0, 1e-3], got {}", self.tol));
        }
        if !(self.guard >= 0.0 && self.guard.is_finite()) {
            return bad(format!("guard must be non-negative, got {}", self.guard));
        }
        if self.mu.iter().any(|m| *m == 0.0 || !m.is_finite()) {
            return bad("mu values must be finite and nonzero".into());
        }
        if let Some((a, b)) = self.window {
            if !(a < b) {
                return bad(format!("window must satisfy lo < hi, got ({a}, {b})"));
            }
        }
        Ok(())
    }

    pub fn lambda_values(&self) -> Vec<f64> {
        self.lambdas.clone().unwrap_or_else(|| vec![self.lambda])
    }

    pub fn r_values(&self) -> Vec<f64> {
        self.r_list.clone().unwrap_or_else(|| vec![self.r])
    }

    pub fn n_values(&self) -> Vec<usize> {
        self.n_list.clone().unwrap_or_else(|| vec![self.n])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SfRecord {
    pub spec: String,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub guard: f64,
    pub sf: i64,
    pub endpoint_signature: i64,
    pub crossings: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum CellResult {
    Sf(SfRecord),
    Index(VerifyRecord),
    Suite(SuiteOutcome),
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub cell: usize,
    pub command: Command,
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub pass: bool,
    pub result: Option<CellResult>,
    pub error: Option<String>,
    pub runtime_ms: u128,
}

impl RunRecord {
    fn new(cell: usize, config: &ExperimentConfig, start: Instant, outcome: Result<CellResult, String>) -> Self {
        let (pass, result, error) = match outcome {
            Ok(r) => {
                let pass = match &r {
                    CellResult::Sf(s) => s.sf == s.endpoint_signature,
                    CellResult::Index(v) => v.equal,
                    CellResult::Suite(s) => s.pass(),
                };
                (pass, Some(r), None)
            }
            Err(e) => (false, None, Some(e)),
        };
        RunRecord {
            cell,
            command: config.command,
            version: VERSION,
            config: config.clone(),
            pass,
            result,
            error,
            runtime_ms: start.elapsed().as_millis(),
        }
    }
}

/// Path of the eigenflow table written next to the record file by `sf`.
pub fn eigenflow_path(out: &Path) -> PathBuf {
    out.with_extension("eigenflow.csv")
}

fn run_sf(cfg: &ExperimentConfig, spec: &FamilySpec, r: f64, n: usize) -> Result<CellResult, String> {
    let samples = evaluate(spec, &Grid::interval(r, n)).map_err(|e| e.to_string())?;
    let res = spectral_flow(&samples, cfg.guard).map_err(|e| e.to_string())?;
    let signature = endpoint_signature_sf(&samples, cfg.guard).map_err(|e| e.to_string())?;
    if let Some(out) = &cfg.out {
        let trace = eigen_traces_with_guard(&samples, cfg.guard).map_err(|e| e.to_string())?;
        let path = eigenflow_path(out);
        let file = File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        write_trace_csv(&trace, BufWriter::new(file)).map_err(|e| e.to_string())?;
    }
    Ok(CellResult::Sf(SfRecord {
        spec: spec.label(),
        r,
        n,
        guard: cfg.guard,
        sf: res.sf,
        endpoint_signature: signature,
        crossings: res.crossings.len(),
        depth: res.depth,
    }))
}

fn run_index(cfg: &ExperimentConfig, spec: &FamilySpec, lambda: f64, r: f64, n: usize) -> Result<CellResult, String> {
    sf_index_verify_gauged(spec, lambda, r, n, cfg.tol, cfg.window)
        .map(CellResult::Index)
        .map_err(|e| format!("λ={lambda} R={r} N={n}: {e}"))
}

type SuiteFn = fn(&ExperimentConfig) -> SuiteOutcome;

fn verify_suites() -> Vec<SuiteFn> {
    vec![
        |c| suites::hodge_suite(c.seed, 1000),
        |c| suites::derivation_suite(c.seed, 50),
        |c| suites::cb_norm_suite(c.seed, 50),
        |c| suites::connection_suite(c.seed, 200),
        |c| suites::product_suite(c.seed),
        |c| suites::kucerovsky_suite(c.seed),
        |c| suites::correspondence_suite(&c.mu),
    ]
}

/// Runs a validated config; records are ordered by cell index.
pub fn run(cfg: &ExperimentConfig) -> Vec<RunRecord> {
    let family = cfg.family.clone();
    match cfg.command {
        Command::Verify => verify_suites()
            .into_par_iter()
            .enumerate()
            .map(|(cell, suite)| {
                let start = Instant::now();
                RunRecord::new(cell, cfg, start, Ok(CellResult::Suite(suite(cfg))))
            })
            .collect(),
        Command::Sf => {
            let start = Instant::now();
            let spec = family.expect("validated");
            vec![RunRecord::new(0, cfg, start, run_sf(cfg, &spec, cfg.r, cfg.n))]
        }
        Command::Index => {
            let start = Instant::now();
            let spec = family.expect("validated");
            vec![RunRecord::new(
                0,
                cfg,
                start,
                run_index(cfg, &spec, cfg.lambda, cfg.r, cfg.n),
            )]
        }
        Command::Sweep => {
            let spec = family.expect("validated");
            let mut cells = Vec::new();
            for r in cfg.r_values() {
                for n in cfg.n_values() {
                    for lambda in cfg.lambda_values() {
                        cells.push((lambda, r, n));
                    }
                }
            }
            cells
                .into_par_iter()
                .enumerate()
                .map(|(cell, (lambda, r, n))| {
                    let start = Instant::now();
                    RunRecord::new(cell, cfg, start, run_index(cfg, &spec, lambda, r, n))
                })
                .collect()
        }
    }
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    cell: usize,
    command: Command,
    family: Option<String>,
    lambda: Option<f64>,
    #[serde(rename = "R")]
    r: Option<f64>,
    #[serde(rename = "N")]
    n: Option<usize>,
    sf: Option<i64>,
    index: Option<i64>,
    dim_ker: Option<usize>,
    dim_coker: Option<usize>,
    suite: Option<&'a str>,
    checks: Option<usize>,
    failures: Option<usize>,
    pass: bool,
    runtime_ms: u128,
    error: Option<&'a str>,
}

/// Columns of the CSV summary, in order.
pub const SUMMARY_COLUMNS: [&str; 16] = [
    "cell",
    "command",
    "family",
    "lambda",
    "R",
    "N",
    "sf",
    "index",
    "dim_ker",
    "dim_coker",
    "suite",
    "checks",
    "failures",
    "pass",
    "runtime_ms",
    "error",
];

fn summary_row(rec: &RunRecord) -> SummaryRow<'_> {
    let mut row = SummaryRow {
        cell: rec.cell,
        command: rec.command,
        family: rec.config.family.as_ref().map(FamilySpec::label),
        lambda: None,
        r: None,
        n: None,
        sf: None,
        index: None,
        dim_ker: None,
        dim_coker: None,
        suite: None,
        checks: None,
        failures: None,
        pass: rec.pass,
        runtime_ms: rec.runtime_ms,
        error: rec.error.as_deref(),
    };
    match &rec.result {
        Some(CellResult::Sf(s)) => {
            row.r = Some(s.r);
            row.n = Some(s.n);
            row.sf = Some(s.sf);
        }
        Some(CellResult::Index(v)) => {
            row.lambda = Some(v.lambda);
            row.r = Some(v.r);
            row.n = Some(v.n);
            row.sf = Some(v.sf);
            row.index = Some(v.index);
            row.dim_ker = Some(v.dim_ker);
            row.dim_coker = Some(v.dim_coker);
        }
        Some(CellResult::Suite(s)) => {
            row.family = None;
            row.suite = Some(&s.name);
            row.checks = Some(s.checks);
            row.failures = Some(s.failures);
        }
        None => {}
    }
    row
}

/// Writes records as JSON lines or as the CSV summary table.
pub fn write_records<W: Write>(records: &[RunRecord], format: Format, out: W) -> io::Result<()> {
    match format {
        Format::Json => {
            let mut out = out;
            for rec in records {
                serde_json::to_writer(&mut out, rec)?;
                out.write_all(b"\n")?;
            }
            out.flush()
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for rec in records {
                w.serialize(summary_row(rec)).map_err(io::Error::other)?;
            }
            w.flush()
        }
    }
}

/// One line per record, failures marked.
pub fn text_summary(records: &[RunRecord]) -> String {
    let mut s = String::new();
    for rec in records {
        let mark = if rec.pass { "PASS" } else { "FAIL" };
        let detail = match (&rec.result, &rec.error) {
            (Some(CellResult::Sf(r)), _) => {
                format!(
                    "{} R={} N={} sf={} signature={}",
                    r.spec, r.r, r.n, r.sf, r.endpoint_signature
                )
            }
            (Some(CellResult::Index(v)), _) => format!(
                "{} λ={} R={} N={} sf={} index={} (ker {}, coker {}) gap={:.3e}",
                v.spec, v.lambda, v.r, v.n, v.sf, v.index, v.dim_ker, v.dim_coker, v.singular_gap
            ),
            (Some(CellResult::Suite(o)), _) => format!(
                "{}: {} checks, {} failures, max defect {:.3e}{}",
                o.name,
                o.checks,
                o.failures,
                o.max_defect,
                o.notes.first().map(|n| format!("; {n}")).unwrap_or_default()
            ),
            (None, Some(e)) => format!("error: {e}"),
            (None, None) => String::new(),
        };
        s.push_str(&format!(
            "[{mark}] cell {} {:?} {detail} ({} ms)\n",
            rec.cell, rec.command, rec.runtime_ms
        ));
    }
    let failed = records.iter().filter(|r| !r.pass).count();
    s.push_str(&format!("{} records, {failed} failed\n", records.len()));
    s
}

pub fn exit_code(records: &[RunRecord]) -> i32 {
    if records.iter().all(|r| r.pass) {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

/// Entry point used by the binary; returns the process exit status.
pub fn main_with(args: Args) -> i32 {
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("sflab: {e}");
            return EXIT_USAGE;
        }
    };
    if let Err(e) = cfg.apply_flags(&args) {
        eprintln!("sflab: {e}");
        return EXIT_USAGE;
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("sflab: cannot start worker pool: {e}");
            return EXIT_FAIL;
        }
    };
    let records = pool.install(|| run(&cfg));
    let summary = text_summary(&records);
    let written = match &cfg.out {
        Some(path) => File::create(path)
            .and_then(|f| write_records(&records, cfg.format, BufWriter::new(f)))
            .map(|_| print!("{summary}"))
            .map_err(|e| format!("{}: {e}", path.display())),
        None => write_records(&records, cfg.format, io::stdout().lock())
            .map(|_| eprint!("{summary}"))
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        eprintln!("sflab: write failed: {e}");
        return EXIT_FAIL;
    }
    exit_code(&records)
}
