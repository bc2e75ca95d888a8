//! Experiment configs, runs, refinement sweeps and CSV reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{AxisKind, Grid4D, GridConfig};
use crate::integrators::{KrylovConfig, KrylovMode, SpectralOptions};
use crate::mc::{simulate, McConfig};
use crate::model::{CorrelationMatrix, Correlations, ModelParams, OptionKind, OptionSpec, ThetaMode, ThetaParams};
use crate::operator::BoundaryMode;
use crate::pricer::{
    greeks, mean_roc, price, roc_ladder, stability, standard_queries, ConvergenceRow, GreeksSlice, Interpolation,
    Method, PricingConfig, SolutionField, Solver, SolverChoice,
};
use crate::rbf_stencil::{ShapeParams, ShapeRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSection {
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Spot for the Monte Carlo oracle; defaults to the strike.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<f64>,
    pub v0: f64,
    pub rd0: f64,
    pub rf0: f64,
    pub kappa: f64,
    pub vbar: f64,
    pub gamma: f64,
    pub lambda_d: f64,
    pub lambda_f: f64,
    pub eta_d: f64,
    pub eta_f: f64,
    pub theta_d: ThetaParams,
    pub theta_f: ThetaParams,
    pub correlation: Correlations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub kind: SolverChoice,
    pub method: Method,
    pub boundary: BoundaryMode,
    pub theta_mode: ThetaMode,
    pub interpolation: Interpolation,
    pub krylov_dim: usize,
    pub krylov_tol: f64,
    pub krylov_mode: KrylovMode,
    pub delta_tau: f64,
    pub substeps: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let k = KrylovConfig::default();
        let p = PricingConfig::default();
        Self {
            kind: p.solver,
            method: p.method,
            boundary: p.boundary,
            theta_mode: p.theta_mode,
            interpolation: p.interpolation,
            krylov_dim: k.dim,
            krylov_tol: k.tol,
            krylov_mode: k.mode,
            delta_tau: p.delta_tau,
            substeps: p.substeps,
        }
    }
}

/// Reference prices at the two standard query points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    pub v1: f64,
    pub v2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub lambda_max: bool,
    pub greeks: bool,
    pub save_field: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            lambda_max: false,
            greeks: true,
            save_field: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    pub antithetic: bool,
}

impl Default for McSection {
    fn default() -> Self {
        let d = McConfig::default();
        Self {
            paths: d.paths,
            steps_per_year: d.steps_per_year,
            seed: d.seed,
            antithetic: d.antithetic,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub option: OptionSection,
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub shape: ShapeRule,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceSection>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn option_spec(&self) -> Result<OptionSpec> {
        OptionSpec::new(self.option.kind, self.option.strike, self.option.maturity)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let m = &self.model;
        Ok(ModelParams {
            s0: m.s0.unwrap_or(self.option.strike),
            v0: m.v0,
            rd0: m.rd0,
            rf0: m.rf0,
            kappa: m.kappa,
            vbar: m.vbar,
            gamma: m.gamma,
            lambda_d: m.lambda_d,
            lambda_f: m.lambda_f,
            eta_d: m.eta_d,
            eta_f: m.eta_f,
            theta_d: m.theta_d,
            theta_f: m.theta_f,
            correlation: CorrelationMatrix::from_pairs(&m.correlation)?,
        })
    }

    pub fn pricing_config(&self) -> PricingConfig {
        let s = &self.solver;
        PricingConfig {
            grid: self.grid.clone(),
            shape: self.shape,
            method: s.method,
            boundary: s.boundary,
            solver: s.kind,
            theta_mode: s.theta_mode,
            krylov: KrylovConfig {
                dim: s.krylov_dim,
                tol: s.krylov_tol,
                mode: s.krylov_mode,
                ..KrylovConfig::default()
            },
            delta_tau: s.delta_tau,
            substeps: s.substeps,
            interpolation: s.interpolation,
        }
    }

    pub fn mc_config(&self) -> Option<McConfig> {
        self.mc.as_ref().map(|m| McConfig {
            paths: m.paths,
            steps_per_year: m.steps_per_year,
            seed: m.seed,
            antithetic: m.antithetic,
            ..McConfig::default()
        })
    }

    /// Checks the whole config and reports every problem found.
    pub fn validate(&self) -> Result<()> {
        let mut problems: Vec<String> = Vec::new();
        let mut push_err = |e: Error| match e {
            Error::ModelConfig(msg) | Error::Config(msg) | Error::InvalidArgument(msg) => {
                problems.extend(msg.split("; ").map(|s| s.to_string()))
            }
            other => problems.push(other.to_string()),
        };
        if let Err(e) = self.option_spec() {
            push_err(e);
        }
        match self.model_params() {
            Ok(p) => {
                if let Err(e) = p.validate() {
                    push_err(e);
                }
            }
            Err(e) => push_err(e),
        }
        for (k, &m) in self.grid.m.iter().enumerate() {
            if m < 4 {
                problems.push(format!("grid.m[{k}] must be at least 4, got {m}"));
            }
        }
        if !(self.grid.r_min < self.model.rd0.min(self.model.rf0) && self.grid.r_max > self.model.rd0.max(self.model.rf0)) {
            problems.push("grid rate bounds must contain rd0 and rf0".into());
        }
        if !(self.grid.v_max > self.model.v0) {
            problems.push("grid.v_max must exceed model.v0".into());
        }
        if !(self.grid.s_max_factor > 1.0) {
            problems.push("grid.s_max_factor must exceed 1".into());
        }
        for (name, x) in [("s", self.shape.s), ("v", self.shape.v), ("rd", self.shape.rd), ("rf", self.shape.rf)] {
            if !(x > 0.0) {
                problems.push(format!("shape.{name} must be positive, got {x}"));
            }
        }
        let s = &self.solver;
        let td = !(s.theta_mode == ThetaMode::Constant
            || (self.model.theta_d.is_constant() && self.model.theta_f.is_constant()));
        if s.kind == SolverChoice::Krylov && td {
            problems.push(
                "solver.kind = \"krylov\" needs a time-independent operator: set solver.theta_mode = \"constant\" or constant theta levels".into(),
            );
        }
        if s.boundary == BoundaryMode::Dirichlet && self.option.kind == OptionKind::Put {
            problems.push("solver.boundary = \"dirichlet\" is for calls; use \"abc\" or \"neumann_flux\" for a put".into());
        }
        if !(s.delta_tau > 0.0) {
            problems.push(format!("solver.delta_tau must be positive, got {}", s.delta_tau));
        }
        if s.substeps == 0 {
            problems.push("solver.substeps must be at least 1".into());
        }
        if s.krylov_dim == 0 {
            problems.push("solver.krylov_dim must be at least 1".into());
        }
        if !(s.krylov_tol > 0.0) {
            problems.push(format!("solver.krylov_tol must be positive, got {}", s.krylov_tol));
        }
        if let Some(r) = &self.reference {
            for (name, x) in [("v1", r.v1), ("v2", r.v2)] {
                if x == 0.0 || !x.is_finite() {
                    problems.push(format!("reference.{name} must be nonzero, got {x}"));
                }
            }
        }
        if let Some(m) = &self.mc {
            if m.paths == 0 || m.steps_per_year == 0 {
                problems.push("mc.paths and mc.steps_per_year must be at least 1".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "{} problem(s) in experiment config:\n  - {}",
                problems.len(),
                problems.join("\n  - ")
            )))
        }
    }

    /// Canonical TOML of the parsed config.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical echo.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.echo().as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub re_lambda_max: f64,
    pub im_lambda_max: f64,
    pub symmetric_max: Option<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub label: String,
    pub point: [f64; 4],
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    pub delta: f64,
    pub delta_std_error: f64,
    pub pde: f64,
    /// `|pde - mean| <= max(3 SE, 0.5% of mean)`.
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocSummary {
    pub axis: AxisKind,
    pub ladder: Vec<usize>,
    pub roc1: Vec<Option<f64>>,
    pub roc2: Vec<Option<f64>>,
    pub mean1: Option<f64>,
    pub mean2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub name: String,
    pub config_hash: String,
    pub config_echo: String,
    pub solver: Option<Solver>,
    pub rows: Vec<ConvergenceRow>,
    pub stability: Option<StabilityRow>,
    pub greeks: Option<GreeksSlice>,
    pub mc: Vec<McRow>,
    pub roc: Option<RocSummary>,
    /// `(label, seconds)`.
    pub timings: Vec<(String, f64)>,
}

/// A finished single run together with its solved field.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub field: SolutionField,
}

fn report_shell(cfg: &ExperimentConfig) -> ExperimentReport {
    ExperimentReport {
        name: cfg.name.clone(),
        config_hash: cfg.hash(),
        config_echo: cfg.echo(),
        solver: None,
        rows: Vec::new(),
        stability: None,
        greeks: None,
        mc: Vec::new(),
        roc: None,
        timings: Vec::new(),
    }
}

/// Grid to prices, plus whatever diagnostics the config asks for.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let model = cfg.model_params()?;
    let option = cfg.option_spec()?;
    let pcfg = cfg.pricing_config();
    let mut report = report_shell(cfg);
    let t0 = Instant::now();
    let sol = price(&model, &option, &pcfg)?;
    let elapsed = t0.elapsed();
    report.solver = Some(sol.solver);
    report.timings.push(("assembly".into(), sol.assembly_time.as_secs_f64()));
    report.timings.push(("solve".into(), sol.solve_time.as_secs_f64()));
    let queries = standard_queries(&model, &option);
    let v = [sol.field.at(queries[0])?, sol.field.at(queries[1])?];
    let reference = cfg.reference.map(|r| [r.v1, r.v2]);
    let mut row = ConvergenceRow::new(cfg.grid.m, v, reference, elapsed)?;
    if cfg.diagnostics.lambda_max {
        let t = Instant::now();
        let s = stability(&model, &option, &pcfg, &SpectralOptions::default())?;
        report.timings.push(("lambda_max".into(), t.elapsed().as_secs_f64()));
        row.re_lambda_max = Some(s.re_lambda_max);
        report.stability = Some(StabilityRow {
            re_lambda_max: s.re_lambda_max,
            im_lambda_max: s.dominant.value.im,
            symmetric_max: s.symmetric_max.map(|e| e.value.re),
            converged: s.converged,
        });
    }
    report.rows.push(row);
    if cfg.diagnostics.greeks {
        report.greeks = Some(greeks(&sol.field, model.rd0, model.rf0)?);
    }
    if let Some(mcfg) = cfg.mc_config() {
        let t = Instant::now();
        for (k, q) in queries.iter().enumerate() {
            let m = ModelParams {
                rd0: q[2],
                rf0: q[3],
                v0: q[1],
                s0: q[0],
                ..model.clone()
            };
            let r = simulate(&m, &option, &mcfg)?;
            let tol = (3.0 * r.price.std_error).max(0.005 * r.price.mean.abs());
            report.mc.push(McRow {
                label: format!("V{}", k + 1),
                point: *q,
                mean: r.price.mean,
                std_error: r.price.std_error,
                paths: r.price.paths,
                delta: r.delta.mean,
                delta_std_error: r.delta.std_error,
                pde: v[k],
                agrees: (v[k] - r.price.mean).abs() <= tol,
            });
        }
        report.timings.push(("monte_carlo".into(), t.elapsed().as_secs_f64()));
    }
    Ok(RunOutput {
        report,
        field: sol.field,
    })
}

/// Doubling check and ROC bookkeeping shared by the sweep and its self-test.
pub fn roc_sweep<F>(axis: AxisKind, ladder: &[usize], solve: F) -> Result<(Vec<[f64; 2]>, RocSummary)>
where
    F: Fn(usize) -> Result<[f64; 2]> + Sync,
{
    if ladder.len() < 3 {
        return Err(Error::Config(format!(
            "a refinement ladder needs at least 3 sizes, got {}",
            ladder.len()
        )));
    }
    if let Some(w) = ladder.windows(2).find(|w| w[1] != 2 * w[0]) {
        return Err(Error::Config(format!("ladder must double at every step, found {} then {}", w[0], w[1])));
    }
    let values: Vec<[f64; 2]> = ladder
        .par_iter()
        .map(|&m| solve(m))
        .collect::<Result<Vec<_>>>()?;
    let roc1 = roc_ladder(&values.iter().map(|v| v[0]).collect::<Vec<_>>());
    let roc2 = roc_ladder(&values.iter().map(|v| v[1]).collect::<Vec<_>>());
    let summary = RocSummary {
        axis,
        ladder: ladder.to_vec(),
        mean1: mean_roc(&roc1),
        mean2: mean_roc(&roc2),
        roc1,
        roc2,
    };
    Ok((values, summary))
}

/// Runs the config once per ladder entry with one axis refined.
pub fn sweep(cfg: &ExperimentConfig, axis: AxisKind, ladder: &[usize]) -> Result<ExperimentReport> {
    cfg.validate()?;
    let model = cfg.model_params()?;
    let option = cfg.option_spec()?;
    let queries = standard_queries(&model, &option);
    let mut report = report_shell(cfg);
    let timed = std::sync::Mutex::new(Vec::new());
    let t0 = Instant::now();
    let (values, summary) = roc_sweep(axis, ladder, |m| {
        let mut p = cfg.pricing_config();
        p.grid.m[axis.index()] = m;
        let t = Instant::now();
        let sol = price(&model, &option, &p)?;
        timed.lock().unwrap().push((m, t.elapsed()));
        Ok([sol.field.at(queries[0])?, sol.field.at(queries[1])?])
    })?;
    let timed = timed.into_inner().unwrap();
    let reference = cfg.reference.map(|r| [r.v1, r.v2]);
    for (&m, v) in ladder.iter().zip(&values) {
        let mut dims = cfg.grid.m;
        dims[axis.index()] = m;
        let elapsed = timed.iter().find(|t| t.0 == m).map(|t| t.1).unwrap_or_default();
        report.rows.push(ConvergenceRow::new(dims, *v, reference, elapsed)?);
    }
    report.timings.push(("sweep".into(), t0.elapsed().as_secs_f64()));
    report.roc = Some(summary);
    Ok(report)
}

fn num(x: f64) -> String {
    // shortest representation that parses back to the same bits
    format!("{x}")
}

fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_path(path)?)
}

/// Convergence rows, one per grid; elapsed times live in `timings.csv` so this file is reproducible.
pub fn write_rows(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "name", "config_hash", "m1", "m2", "m3", "m4", "v1", "v2", "eps1", "eps2", "re_lambda_max",
    ])?;
    for r in &report.rows {
        let m = r.m.map(|x| x.to_string());
        w.write_record([
            report.name.clone(),
            report.config_hash.clone(),
            m[0].clone(),
            m[1].clone(),
            m[2].clone(),
            m[3].clone(),
            num(r.v1),
            num(r.v2),
            opt_num(r.eps1),
            opt_num(r.eps2),
            opt_num(r.re_lambda_max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_roc(report: &ExperimentReport, path: &Path) -> Result<()> {
    let Some(roc) = &report.roc else {
        return Ok(());
    };
    let mark = |x: Option<f64>| x.map(num).unwrap_or_else(|| "undefined".into());
    let mut w = csv_writer(path)?;
    w.write_record(["config_hash", "axis", "m", "v1", "roc1", "v2", "roc2"])?;
    for (k, row) in report.rows.iter().enumerate() {
        // the ROC of entry k uses entries k-2, k-1 and k
        let (r1, r2) = if k >= 2 {
            (mark(roc.roc1[k - 2]), mark(roc.roc2[k - 2]))
        } else {
            (String::new(), String::new())
        };
        w.write_record([
            report.config_hash.clone(),
            roc.axis.name().to_string(),
            roc.ladder[k].to_string(),
            num(row.v1),
            r1,
            num(row.v2),
            r2,
        ])?;
    }
    w.write_record([
        report.config_hash.clone(),
        roc.axis.name().to_string(),
        "mean".into(),
        String::new(),
        mark(roc.mean1),
        String::new(),
        mark(roc.mean2),
    ])?;
    w.flush()?;
    Ok(())
}

pub fn write_greeks(g: &GreeksSlice, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["s", "v", "value", "delta", "vega", "vanna"])?;
    for j in 0..g.v.len() {
        for i in 0..g.s.len() {
            let k = g.index(i, j);
            w.write_record([g.s[i], g.v[j], g.value[k], g.delta[k], g.vega[k], g.vanna[k]].map(num))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_mc(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "config_hash", "label", "s", "v", "rd", "rf", "mc_mean", "mc_se", "paths", "mc_delta", "mc_delta_se", "pde",
        "agrees",
    ])?;
    for r in &report.mc {
        w.write_record([
            report.config_hash.clone(),
            r.label.clone(),
            num(r.point[0]),
            num(r.point[1]),
            num(r.point[2]),
            num(r.point[3]),
            num(r.mean),
            num(r.std_error),
            r.paths.to_string(),
            num(r.delta),
            num(r.delta_std_error),
            num(r.pde),
            r.agrees.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings(report: &ExperimentReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["config_hash", "stage", "seconds"])?;
    for (label, secs) in &report.timings {
        w.write_record([report.config_hash.clone(), label.clone(), num(*secs)])?;
    }
    for r in &report.rows {
        let m = r.m.map(|x| x.to_string()).join("x");
        w.write_record([report.config_hash.clone(), format!("price {m}"), num(r.elapsed_secs)])?;
    }
    w.flush()?;
    Ok(())
}

/// All node values, one row per node in natural order.
pub fn write_field(field: &SolutionField, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["s", "v", "rd", "rf", "value"])?;
    for (n, &x) in field.values.iter().enumerate() {
        let p = field.grid.point(n);
        w.write_record([p[0], p[1], p[2], p[3], x].map(num))?;
    }
    w.flush()?;
    Ok(())
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Io(format!("line {line}: cannot parse {s:?} as a number")))
}

/// Reads a field written by [`write_field`].
pub fn read_field(path: &Path) -> Result<SolutionField> {
    let mut r = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Io(format!("line {}: expected 5 columns", k + 2)));
        }
        let mut p = [0.0; 4];
        for (a, x) in p.iter_mut().enumerate() {
            *x = parse_f64(&rec[a], k + 2)?;
        }
        points.push(p);
        values.push(parse_f64(&rec[4], k + 2)?);
    }
    let unique = |a: usize| {
        let mut v: Vec<f64> = points.iter().map(|p| p[a]).collect();
        v.sort_by(|x, y| x.total_cmp(y));
        v.dedup();
        v
    };
    let grid = Grid4D::from_nodes(unique(0), unique(1), unique(2), unique(3))?;
    if grid.len() != values.len() || points.iter().enumerate().any(|(n, p)| grid.point(n) != *p) {
        return Err(Error::Io(format!(
            "{}: rows are not a full tensor grid in natural order",
            path.display()
        )));
    }
    SolutionField::new(grid, values, f64::NAN, ShapeParams::infinite())
}

/// A 2D slice named by two axes, e.g. `sv` or `rdrf`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceSpec {
    pub x: AxisKind,
    pub y: AxisKind,
}

impl std::str::FromStr for SliceSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut axes = Vec::new();
        let mut rest = s.trim().to_ascii_lowercase();
        while !rest.is_empty() {
            let (kind, len) = if rest.starts_with("rd") {
                (AxisKind::Rd, 2)
            } else if rest.starts_with("rf") {
                (AxisKind::Rf, 2)
            } else if rest.starts_with('s') {
                (AxisKind::S, 1)
            } else if rest.starts_with('v') {
                (AxisKind::V, 1)
            } else {
                return Err(Error::Config(format!("unknown slice {s:?}; use two of s, v, rd, rf such as \"sv\"")));
            };
            axes.push(kind);
            rest = rest[len..].to_string();
        }
        match axes[..] {
            [x, y] if x != y => Ok(Self { x, y }),
            _ => Err(Error::Config(format!("slice {s:?} must name two different axes"))),
        }
    }
}

/// `(x, y, V)` triples of a slice; the two other coordinates are fixed at `fixed` (indexed by axis).
pub fn surface(field: &SolutionField, slice: SliceSpec, fixed: [f64; 4]) -> Result<Vec<[f64; 3]>> {
    let g = &field.grid;
    let (xs, ys) = (g.axis(slice.x).nodes(), g.axis(slice.y).nodes());
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in ys {
        for &x in xs {
            let mut p = fixed;
            p[slice.x.index()] = x;
            p[slice.y.index()] = y;
            out.push([x, y, field.at(p)?]);
        }
    }
    Ok(out)
}

pub fn write_surface<W: std::io::Write>(rows: &[[f64; 3]], slice: SliceSpec, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(out);
    w.write_record([slice.x.name(), slice.y.name(), "value"])?;
    for r in rows {
        w.write_record(r.map(num))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_surface(path: &Path) -> Result<Vec<[f64; 3]>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let mut row = [0.0; 3];
        for (a, x) in row.iter_mut().enumerate() {
            *x = parse_f64(rec.get(a).unwrap_or(""), k + 2)?;
        }
        out.push(row);
    }
    Ok(out)
}

/// Where the field of a run sits and which point slices are taken through by default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMeta {
    pub name: String,
    pub config_hash: String,
    /// Default fixed coordinates `(E, v0, rd0, rf0)`.
    pub focus: [f64; 4],
}

pub fn focus_point(cfg: &ExperimentConfig) -> [f64; 4] {
    [cfg.option.strike, cfg.model.v0, cfg.model.rd0, cfg.model.rf0]
}

/// Human-readable summary.
pub fn format_table(report: &ExperimentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} (config {})", report.name, report.config_hash);
    if let Some(solver) = report.solver {
        let _ = writeln!(s, "solver: {solver:?}");
    }
    let _ = writeln!(
        s,
        "{:>4} {:>4} {:>4} {:>4} {:>10} {:>10} {:>10} {:>10} {:>12} {:>9}",
        "m1", "m2", "m3", "m4", "V1", "V2", "eps1", "eps2", "Re(lmax)", "secs"
    );
    let e = |x: Option<f64>| x.map(|v| format!("{v:.2e}")).unwrap_or_else(|| "-".into());
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{:>4} {:>4} {:>4} {:>4} {:>10.5} {:>10.5} {:>10} {:>10} {:>12} {:>9.2}",
            r.m[0],
            r.m[1],
            r.m[2],
            r.m[3],
            r.v1,
            r.v2,
            e(r.eps1),
            e(r.eps2),
            r.re_lambda_max.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into()),
            r.elapsed_secs
        );
    }
    if let Some(roc) = &report.roc {
        let f = |x: &Option<f64>| x.map(|v| format!("{v:.2}")).unwrap_or_else(|| "undefined".into());
        let _ = writeln!(s, "ROC along {}:", roc.axis.name());
        for (k, m) in roc.ladder.iter().enumerate().skip(2) {
            let _ = writeln!(s, "  m={m:<5} V1 {}  V2 {}", f(&roc.roc1[k - 2]), f(&roc.roc2[k - 2]));
        }
        let _ = writeln!(s, "  mean     V1 {}  V2 {}", f(&roc.mean1), f(&roc.mean2));
    }
    if let Some(st) = &report.stability {
        let _ = writeln!(
            s,
            "T*lambda_max = {:.3} {:+.3}i (converged: {}), symmetric part max {}",
            st.re_lambda_max,
            st.im_lambda_max,
            st.converged,
            st.symmetric_max.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
        );
    }
    for m in &report.mc {
        let _ = writeln!(
            s,
            "MC {}: {:.4} +/- {:.4} ({} paths), PDE {:.4}, agree: {}",
            m.label, m.mean, m.std_error, m.paths, m.pde, m.agrees
        );
    }
    s
}

/// Writes every CSV of a run into `dir` and returns the paths written.
pub fn write_outputs(output: &RunOutput, cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let report = &output.report;
    let mut written = Vec::new();
    let mut put = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    write_rows(report, &put("report.csv"))?;
    write_timings(report, &put("timings.csv"))?;
    fs::write(put("report.txt"), format_table(report))?;
    fs::write(put("config.toml"), &report.config_echo)?;
    if let Some(g) = &report.greeks {
        write_greeks(g, &put("greeks.csv"))?;
    }
    if !report.mc.is_empty() {
        write_mc(report, &put("mc.csv"))?;
    }
    if cfg.diagnostics.save_field {
        write_field(&output.field, &put("field.csv"))?;
        let meta = ResultMeta {
            name: report.name.clone(),
            config_hash: report.config_hash.clone(),
            focus: focus_point(cfg),
        };
        fs::write(put("meta.toml"), toml::to_string(&meta).expect("meta serializes"))?;
    }
    Ok(written)
}

pub fn write_sweep_outputs(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let files = [
        dir.join("sweep.csv"),
        dir.join("roc.csv"),
        dir.join("timings.csv"),
        dir.join("sweep.txt"),
        dir.join("config.toml"),
    ];
    write_rows(report, &files[0])?;
    write_roc(report, &files[1])?;
    write_timings(report, &files[2])?;
    fs::write(&files[3], format_table(report))?;
    fs::write(&files[4], &report.config_echo)?;
    Ok(files.to_vec())
}

/// Loads a result directory (or a `field.csv` inside one) for slicing.
pub fn load_result(path: &Path) -> Result<(SolutionField, Option<ResultMeta>)> {
    let (field_path, meta_path) = if path.is_dir() {
        (path.join("field.csv"), path.join("meta.toml"))
    } else {
        let dir = path.parent().unwrap_or(Path::new("."));
        (path.to_path_buf(), dir.join("meta.toml"))
    };
    let field = read_field(&field_path)?;
    let meta = match fs::read_to_string(&meta_path) {
        Ok(text) => Some(toml::from_str(&text).map_err(|e| Error::Io(format!("{}: {e}", meta_path.display())))?),
        Err(_) => None,
    };
    Ok((field, meta))
}
