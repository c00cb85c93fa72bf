//! Experiment configuration and the `verify`, `sharp` and `sweep` runs.
//!
//! Every run expands the configuration into independent jobs, one per
//! `(N, p, weight)`, evaluates them on the rayon pool and writes the rows in
//! job order, so the output does not depend on scheduling.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{
    estimate_c_hat, estimate_robust_constant, estimate_unweighted_constant,
    empirical_kernel_constant, empirical_theorem_constant,
};
use crate::error::{Error, Result};
use crate::forms::{
    corollary_local_constant, kernel_energy, local_energy, theorem_constant, KernelSpec,
};
use crate::grid::{check_p, mean, Grid};
use crate::inequalities::{
    ball_deviation_functional, check_chain_lemma, check_ckk, check_kernel_bounded_below,
    check_local_weighted, check_nonlocal_weighted, check_shift_lemma, check_theorem,
    InequalityReport,
};
use crate::sharp::{write_trace, EigenOptions};
use crate::suite::{build_suite, SuiteSpec, TestFunction};
use crate::weights::ProfileSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Theorem,
    Local,
    Nonlocal,
    KernelFloor,
    Ckk,
    ShiftLemma,
    ChainLemma,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub s: Vec<f64>,
    #[serde(default, rename = "R")]
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Slack for theorem, local, nonlocal, kernel_floor and shift_lemma.
    #[serde(default)]
    pub exact: f64,
    /// Slack for ckk and chain_lemma.
    #[serde(default = "default_quadrature")]
    pub quadrature: f64,
}

fn default_quadrature() -> f64 {
    crate::inequalities::TOL_QUADRATURE
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            exact: crate::inequalities::TOL_EXACT,
            quadrature: default_quadrature(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    /// File stem of the reports; defaults to the subcommand name.
    #[serde(default)]
    pub prefix: Option<String>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            prefix: None,
        }
    }
}

fn default_p_values() -> Vec<f64> {
    vec![2.0]
}

fn default_weights() -> Vec<ProfileSpec> {
    vec![ProfileSpec::constant()]
}

fn default_steps() -> usize {
    8
}

/// One experiment, read from a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dimension: usize,
    pub grid_sizes: Vec<usize>,
    #[serde(default = "default_p_values")]
    pub p_values: Vec<f64>,
    #[serde(default = "default_weights")]
    pub weights: Vec<ProfileSpec>,
    /// Number of steps used to discretize non-step weight profiles.
    #[serde(default = "default_steps")]
    pub profile_steps: usize,
    #[serde(default)]
    pub kernels: Vec<KernelSpec>,
    #[serde(default)]
    pub checks: Vec<CheckKind>,
    #[serde(default)]
    pub sweep: SweepAxes,
    pub suite: SuiteSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(if path == "." { "<root>".into() } else { path }, e.inner().to_string())
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(Error::config("dimension", "must be 1 or 2"));
        }
        if self.grid_sizes.is_empty() {
            return Err(Error::config("grid_sizes", "at least one N is required"));
        }
        for (i, &n) in self.grid_sizes.iter().enumerate() {
            if n < 4 || n % 2 != 0 {
                return Err(Error::config(
                    format!("grid_sizes[{i}]"),
                    "N must be even and at least 4",
                ));
            }
        }
        if self.p_values.is_empty() {
            return Err(Error::config("p_values", "at least one p is required"));
        }
        for (i, &p) in self.p_values.iter().enumerate() {
            if check_p(p).is_err() {
                return Err(Error::config(format!("p_values[{i}]"), "p must be finite and >= 1"));
            }
        }
        if self.weights.is_empty() {
            return Err(Error::config("weights", "at least one weight is required"));
        }
        if self.profile_steps == 0 {
            return Err(Error::config("profile_steps", "must be positive"));
        }
        for (i, w) in self.weights.iter().enumerate() {
            if let Err(e) = w.build(self.profile_steps) {
                return Err(Error::config(format!("weights[{i}]"), e.to_string()));
            }
        }
        for (i, k) in self.kernels.iter().enumerate() {
            match k.validate() {
                Ok(()) => {}
                Err(Error::InvalidKernel(msg)) => {
                    let field = msg.split(' ').next().unwrap_or("kind").to_string();
                    return Err(Error::config(format!("kernels[{i}].{field}"), msg));
                }
                Err(e) => return Err(Error::config(format!("kernels[{i}].p"), e.to_string())),
            }
        }
        for (i, &s) in self.sweep.s.iter().enumerate() {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::config(format!("sweep.s[{i}]"), "s must lie in (0,1)"));
            }
        }
        for (i, &r) in self.sweep.r.iter().enumerate() {
            if !(r >= 1.0 && r.is_finite()) {
                return Err(Error::config(format!("sweep.R[{i}]"), "R must be >= 1"));
            }
        }
        if self.suite.families.is_empty() {
            return Err(Error::config("suite.families", "at least one family is required"));
        }
        for (name, tol) in [
            ("tolerances.exact", self.tolerances.exact),
            ("tolerances.quadrature", self.tolerances.quadrature),
        ] {
            if !(tol >= 0.0 && tol.is_finite()) {
                return Err(Error::config(name, "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    fn fractional_kernels(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.kernels
            .iter()
            .filter_map(|k| k.order().map(|s| (s, k.truncation().unwrap_or(1.0))))
    }
}

/// The JSON schema of [`ExperimentConfig`].
pub fn config_schema() -> serde_json::Value {
    let number_list = serde_json::json!({ "type": "array", "items": { "type": "number" } });
    serde_json::json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "ExperimentConfig",
        "type": "object",
        "additionalProperties": false,
        "required": ["dimension", "grid_sizes", "suite"],
        "properties": {
            "dimension": { "enum": [1, 2] },
            "grid_sizes": {
                "type": "array", "minItems": 1,
                "items": { "type": "integer", "minimum": 4, "multipleOf": 2 }
            },
            "p_values": {
                "type": "array", "minItems": 1, "default": [2.0],
                "items": { "type": "number", "minimum": 1 }
            },
            "weights": {
                "type": "array", "minItems": 1,
                "items": { "oneOf": [
                    {
                        "type": "object", "additionalProperties": false,
                        "required": ["type", "breakpoints", "values"],
                        "properties": {
                            "type": { "const": "step" },
                            "breakpoints": number_list,
                            "values": number_list
                        }
                    },
                    {
                        "type": "object", "additionalProperties": false,
                        "required": ["type", "beta"],
                        "properties": {
                            "type": { "const": "power" },
                            "beta": { "type": "number", "minimum": 0 }
                        }
                    }
                ]}
            },
            "profile_steps": { "type": "integer", "minimum": 1, "default": 8 },
            "kernels": {
                "type": "array",
                "items": { "oneOf": [
                    {
                        "type": "object", "additionalProperties": false, "required": ["kind"],
                        "properties": {
                            "kind": { "const": "local_gradient" },
                            "p": { "type": "number", "minimum": 1 }
                        }
                    },
                    {
                        "type": "object", "additionalProperties": false, "required": ["kind", "s"],
                        "properties": {
                            "kind": { "const": "fractional" },
                            "s": { "type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1 },
                            "p": { "type": "number", "minimum": 1 },
                            "R": { "type": "number", "minimum": 1 }
                        }
                    },
                    {
                        "type": "object", "additionalProperties": false, "required": ["kind", "c"],
                        "properties": {
                            "kind": { "const": "constant_floor" },
                            "c": { "type": "number", "exclusiveMinimum": 0 },
                            "p": { "type": "number", "minimum": 1 }
                        }
                    }
                ]}
            },
            "checks": {
                "type": "array",
                "items": { "enum": [
                    "theorem", "local", "nonlocal", "kernel_floor", "ckk", "shift_lemma", "chain_lemma"
                ]}
            },
            "sweep": {
                "type": "object", "additionalProperties": false,
                "properties": { "s": number_list, "R": number_list }
            },
            "suite": {
                "type": "object", "additionalProperties": false, "required": ["seed"],
                "properties": {
                    "seed": { "type": "integer", "minimum": 0 },
                    "count": { "type": "integer", "minimum": 0, "default": 8 },
                    "families": {
                        "type": "array", "minItems": 1,
                        "items": { "enum": ["affine", "bump", "random", "eigen"] }
                    }
                }
            },
            "tolerances": {
                "type": "object", "additionalProperties": false,
                "properties": {
                    "exact": { "type": "number", "minimum": 0, "default": 0.0 },
                    "quadrature": { "type": "number", "minimum": 0, "default": 0.05 }
                }
            },
            "output": {
                "type": "object", "additionalProperties": false,
                "properties": {
                    "dir": { "type": "string", "default": "out" },
                    "prefix": { "type": "string" }
                }
            }
        }
    })
}

/// Runtime switches that are not part of the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub verbose: bool,
}

/// Files written by a run and whether every row passed.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub rows: usize,
    pub failures: usize,
}

impl RunSummary {
    pub fn all_pass(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, Copy)]
struct Job {
    n: usize,
    p: f64,
    weight: usize,
}

fn jobs(config: &ExperimentConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for &n in &config.grid_sizes {
        for &p in &config.p_values {
            for weight in 0..config.weights.len() {
                out.push(Job { n, p, weight });
            }
        }
    }
    out
}

fn apply_overrides(config: &ExperimentConfig, opts: &RunOptions) -> ExperimentConfig {
    let mut c = config.clone();
    if let Some(seed) = opts.seed {
        c.suite.seed = seed;
    }
    if let Some(dir) = &opts.out_dir {
        c.output.dir = dir.clone();
    }
    c
}

fn output_paths(config: &ExperimentConfig, default_stem: &str) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(&config.output.dir)?;
    let stem = config.output.prefix.as_deref().unwrap_or(default_stem);
    Ok((
        config.output.dir.join(format!("{stem}.csv")),
        config.output.dir.join(format!("{stem}.json")),
    ))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_json<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, rows)?;
    writeln!(f)?;
    Ok(())
}

/// The report CSV header.
pub const REPORT_COLUMNS: [&str; 12] = [
    "check_id", "d", "N", "p", "s", "R", "profile", "lhs", "rhs", "ratio", "constant_used", "pass",
];

/// Writes reports as CSV with [`REPORT_COLUMNS`].
pub fn write_reports_csv<W: Write>(out: W, reports: &[InequalityReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_COLUMNS)?;
    for r in reports {
        let m = &r.meta;
        w.write_record([
            r.check_id.clone(),
            m.d.to_string(),
            m.n.to_string(),
            m.p.to_string(),
            opt(m.s),
            opt(m.r),
            m.profile.clone(),
            r.lhs.to_string(),
            r.rhs.to_string(),
            r.ratio.to_string(),
            r.constant_used.to_string(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn log(verbose: bool, msg: impl FnOnce() -> String) {
    if verbose {
        eprintln!("{}", msg());
    }
}

fn verify_job(config: &ExperimentConfig, job: Job, verbose: bool) -> Result<Vec<InequalityReport>> {
    let grid = Grid::new(config.dimension, job.n)?;
    let profile = config.weights[job.weight].build(config.profile_steps)?;
    let suite = build_suite(&grid, &config.suite)?;
    let p = job.p;
    let tol = config.tolerances;
    let all = grid.all_cells();
    let mut rows = Vec::new();
    log(verbose, || format!("verify N={} p={p} weight={}", job.n, profile));
    for check in &config.checks {
        match check {
            CheckKind::Theorem => {
                let f = ball_deviation_functional(p);
                for t in &suite {
                    rows.push(check_theorem(&t.u, &profile, &f, p, tol.exact)?.labelled(&t.label));
                }
            }
            CheckKind::Local => {
                let c_hat = estimate_c_hat(&grid, &profile, p, &suite)?;
                for t in &suite {
                    rows.push(
                        check_local_weighted(&t.u, &profile, p, c_hat, tol.exact)?.labelled(&t.label),
                    );
                }
            }
            CheckKind::Nonlocal => {
                for k in config
                    .kernels
                    .iter()
                    .filter(|k| !matches!(k, KernelSpec::LocalGradient { .. }))
                {
                    let k = k.with_p(p);
                    let c = estimate_unweighted_constant(&grid, &profile, &k, &suite)?;
                    if !(c > 0.0) {
                        continue;
                    }
                    for t in &suite {
                        rows.push(
                            check_nonlocal_weighted(&t.u, &profile, &k, c, tol.exact)?
                                .labelled(&t.label),
                        );
                    }
                }
            }
            CheckKind::KernelFloor => {
                for k in config
                    .kernels
                    .iter()
                    .filter(|k| matches!(k, KernelSpec::ConstantFloor { .. }))
                {
                    let k = k.with_p(p);
                    for t in &suite {
                        rows.push(
                            check_kernel_bounded_below(&t.u, &profile, &k, None, tol.exact)?
                                .labelled(&t.label),
                        );
                    }
                }
            }
            CheckKind::Ckk => {
                let orders: Vec<(f64, f64)> = config.fractional_kernels().collect();
                if orders.is_empty() {
                    continue;
                }
                let s0 = orders.iter().map(|o| o.0).fold(0.5, f64::min);
                let c = estimate_robust_constant(&grid, &profile, p, s0, &suite)?;
                for &(s, r) in &orders {
                    for t in &suite {
                        rows.push(
                            check_ckk(&t.u, &profile, p, s, r, c, tol.quadrature)?.labelled(&t.label),
                        );
                    }
                }
            }
            CheckKind::ShiftLemma => {
                for t in &suite {
                    let a = mean(&t.u, &all)?;
                    let f: Vec<f64> = t.u.values().iter().map(|v| v - a).collect();
                    let mut r = check_shift_lemma(&f, a, p)?.to_report(p, a);
                    r.meta.d = grid.dim();
                    r.meta.n = grid.n();
                    r.tol = tol.exact;
                    rows.push(r.labelled(&t.label));
                }
            }
            CheckKind::ChainLemma => {
                for (s, r) in config.fractional_kernels() {
                    for t in &suite {
                        rows.push(
                            check_chain_lemma(&t.u, p, s, r, tol.quadrature)?.labelled(&t.label),
                        );
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Runs every configured check and writes `verify.csv` / `verify.json`.
pub fn run_verify(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let config = apply_overrides(config, opts);
    config.validate()?;
    let per_job: Vec<Vec<InequalityReport>> = jobs(&config)
        .into_par_iter()
        .map(|job| verify_job(&config, job, opts.verbose))
        .collect::<Result<_>>()?;
    let rows: Vec<InequalityReport> = per_job.into_iter().flatten().collect();
    let (csv, json) = output_paths(&config, "verify")?;
    write_reports_csv(fs::File::create(&csv)?, &rows)?;
    write_json(&json, &rows)?;
    Ok(RunSummary {
        csv,
        json,
        rows: rows.len(),
        failures: rows.iter().filter(|r| !r.pass).count(),
    })
}

/// Empirical against explicit constant for one weighted inequality.
#[derive(Debug, Clone, Serialize)]
pub struct SharpRow {
    /// `theorem` or the kernel kind.
    pub kind: String,
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    pub s: Option<f64>,
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub profile: String,
    pub method: String,
    pub lambda: f64,
    pub empirical_constant: f64,
    pub explicit_constant: f64,
    /// `explicit_constant / empirical_constant`.
    pub gap_factor: f64,
    pub residual: Option<f64>,
    pub iterations: usize,
    pub pass: bool,
}

pub const SHARP_COLUMNS: [&str; 15] = [
    "kind",
    "d",
    "N",
    "p",
    "s",
    "R",
    "profile",
    "method",
    "lambda",
    "empirical_constant",
    "explicit_constant",
    "gap_factor",
    "residual",
    "iterations",
    "pass",
];

fn sharp_job(
    config: &ExperimentConfig,
    job: Job,
    verbose: bool,
) -> Result<Vec<(SharpRow, Vec<crate::sharp::TracePoint>)>> {
    let grid = Grid::new(config.dimension, job.n)?;
    let profile = config.weights[job.weight].build(config.profile_steps)?;
    let suite: Vec<TestFunction> = build_suite(&grid, &config.suite)?;
    let p = job.p;
    let d = grid.dim();
    let eig = EigenOptions {
        trace: verbose,
        ..EigenOptions::default()
    };
    let m = theorem_constant(p, d, &profile);
    let row = |kind: &str, k: Option<&KernelSpec>, e: &crate::constants::Empirical, explicit: f64| {
        SharpRow {
            kind: kind.to_string(),
            d,
            n: job.n,
            p,
            s: k.and_then(|k| k.order()),
            r: k.and_then(|k| k.truncation()),
            profile: profile.describe(),
            method: e.method.to_string(),
            lambda: 1.0 / e.constant,
            empirical_constant: e.constant,
            explicit_constant: explicit,
            gap_factor: explicit / e.constant,
            residual: e.residual,
            iterations: e.iterations,
            pass: e.converged && e.constant <= explicit,
        }
    };
    let mut rows = Vec::new();
    log(verbose, || format!("sharp N={} p={p} weight={}", job.n, profile));
    if config.checks.contains(&CheckKind::Theorem) {
        let e = empirical_theorem_constant(&grid, &profile, p, &suite, eig)?;
        rows.push((row("theorem", None, &e, m), e.trace));
    }
    for k in &config.kernels {
        let k = k.with_p(p);
        let e = empirical_kernel_constant(&grid, &profile, &k, &suite, eig)?;
        let explicit = match k {
            KernelSpec::LocalGradient { .. } => {
                let c_hat = estimate_c_hat(&grid, &profile, p, &suite)?;
                corollary_local_constant(p, d, &profile, c_hat)?
            }
            KernelSpec::Fractional { .. } => {
                m * estimate_unweighted_constant(&grid, &profile, &k, &suite)?
            }
            KernelSpec::ConstantFloor { c, .. } => {
                m / (c * grid.volume(&grid.ball_cells(0.5)?))
            }
        };
        rows.push((row(k.name(), Some(&k), &e, explicit), e.trace));
    }
    Ok(rows)
}

/// Estimates sharp constants and writes `sharp.csv` / `sharp.json`; with
/// `verbose`, eigen convergence traces go to `sharp_trace_<row>.csv`.
pub fn run_sharp(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let config = apply_overrides(config, opts);
    config.validate()?;
    let per_job: Vec<_> = jobs(&config)
        .into_par_iter()
        .map(|job| sharp_job(&config, job, opts.verbose))
        .collect::<Result<Vec<_>>>()?;
    let (rows, traces): (Vec<SharpRow>, Vec<_>) = per_job.into_iter().flatten().unzip();
    let (csv_path, json) = output_paths(&config, "sharp")?;
    let mut w = csv::Writer::from_writer(fs::File::create(&csv_path)?);
    w.write_record(SHARP_COLUMNS)?;
    for r in &rows {
        w.write_record([
            r.kind.clone(),
            r.d.to_string(),
            r.n.to_string(),
            r.p.to_string(),
            opt(r.s),
            opt(r.r),
            r.profile.clone(),
            r.method.clone(),
            r.lambda.to_string(),
            r.empirical_constant.to_string(),
            r.explicit_constant.to_string(),
            r.gap_factor.to_string(),
            opt(r.residual),
            r.iterations.to_string(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&json, &rows)?;
    if opts.verbose {
        let stem = config.output.prefix.as_deref().unwrap_or("sharp");
        for (i, trace) in traces.iter().enumerate().filter(|(_, t)| !t.is_empty()) {
            let path = config.output.dir.join(format!("{stem}_trace_{i}.csv"));
            write_trace(fs::File::create(path)?, trace)?;
        }
    }
    Ok(RunSummary {
        csv: csv_path,
        json,
        rows: rows.len(),
        failures: rows.iter().filter(|r| !r.pass).count(),
    })
}

/// One point of the `(s, R)` sweep for one test function.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub p: f64,
    pub s: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub profile: String,
    pub function: String,
    /// Unweighted truncated fractional energy on the ball.
    pub energy: f64,
    /// `(1 - s) · energy`.
    pub scaled_energy: f64,
    pub local_energy: f64,
    /// `scaled_energy / local_energy`.
    pub bbm_ratio: f64,
    pub ckk_ratio: f64,
    pub ckk_constant: f64,
    pub chain_ratio: f64,
    pub pass: bool,
}

pub const SWEEP_COLUMNS: [&str; 15] = [
    "d",
    "N",
    "p",
    "s",
    "R",
    "profile",
    "function",
    "energy",
    "scaled_energy",
    "local_energy",
    "bbm_ratio",
    "ckk_ratio",
    "ckk_constant",
    "chain_ratio",
    "pass",
];

fn sweep_job(config: &ExperimentConfig, job: Job, verbose: bool) -> Result<Vec<SweepRow>> {
    let grid = Grid::new(config.dimension, job.n)?;
    let profile = config.weights[job.weight].build(config.profile_steps)?;
    let suite = build_suite(&grid, &config.suite)?;
    let p = job.p;
    let tol = config.tolerances.quadrature;
    let s_axis = if config.sweep.s.is_empty() { vec![0.5] } else { config.sweep.s.clone() };
    let r_axis = if config.sweep.r.is_empty() { vec![1.0] } else { config.sweep.r.clone() };
    let s0 = s_axis.iter().copied().fold(0.5, f64::min);
    let c_robust = estimate_robust_constant(&grid, &profile, p, s0, &suite)?;
    let all = grid.all_cells();
    log(verbose, || format!("sweep N={} p={p} weight={} C_robust={c_robust}", job.n, profile));
    let mut rows = Vec::new();
    for t in &suite {
        let local = local_energy(&t.u, &all, p, None)?;
        for &s in &s_axis {
            for &r in &r_axis {
                let energy = kernel_energy(&t.u, &all, &KernelSpec::fractional(s, p, Some(r)), None)?;
                let scaled = (1.0 - s) * energy;
                let ckk = check_ckk(&t.u, &profile, p, s, r, c_robust, tol)?;
                let chain = check_chain_lemma(&t.u, p, s, r, tol)?;
                rows.push(SweepRow {
                    d: grid.dim(),
                    n: grid.n(),
                    p,
                    s,
                    r,
                    profile: profile.describe(),
                    function: t.label.clone(),
                    energy,
                    scaled_energy: scaled,
                    local_energy: local,
                    bbm_ratio: if local > 0.0 { scaled / local } else { f64::NAN },
                    ckk_ratio: ckk.ratio,
                    ckk_constant: ckk.constant_used,
                    chain_ratio: chain.ratio,
                    pass: ckk.pass && chain.pass,
                });
            }
        }
    }
    Ok(rows)
}

/// Tabulates the `(s, R)` sweep and writes `sweep.csv` / `sweep.json`.
pub fn run_sweep(config: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary> {
    let config = apply_overrides(config, opts);
    config.validate()?;
    let per_job: Vec<Vec<SweepRow>> = jobs(&config)
        .into_par_iter()
        .map(|job| sweep_job(&config, job, opts.verbose))
        .collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = per_job.into_iter().flatten().collect();
    let (csv_path, json) = output_paths(&config, "sweep")?;
    let mut w = csv::Writer::from_writer(fs::File::create(&csv_path)?);
    w.write_record(SWEEP_COLUMNS)?;
    for r in &rows {
        w.write_record([
            r.d.to_string(),
            r.n.to_string(),
            r.p.to_string(),
            r.s.to_string(),
            r.r.to_string(),
            r.profile.clone(),
            r.function.clone(),
            r.energy.to_string(),
            r.scaled_energy.to_string(),
            r.local_energy.to_string(),
            r.bbm_ratio.to_string(),
            r.ckk_ratio.to_string(),
            r.ckk_constant.to_string(),
            r.chain_ratio.to_string(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&json, &rows)?;
    Ok(RunSummary {
        csv: csv_path,
        json,
        rows: rows.len(),
        failures: rows.iter().filter(|r| !r.pass).count(),
    })
}
