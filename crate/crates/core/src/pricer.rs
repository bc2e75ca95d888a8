//! Grid to price: assembly, time stepping, interpolation, Greeks and error metrics.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{build_grid, AxisKind, Grid4D, GridConfig, GridFocus, Spacing};
use crate::integrators::{
    estimate_lambda_max, krylov_expm_action, modified_midpoint_solve, KrylovConfig, MidpointConfig,
    SpectralOptions, SpectralReport,
};
use crate::model::{ModelParams, OptionSpec, ThetaMode};
use crate::operator::{first_derivative_matrix, AssemblyMetadata, BoundaryMode, DiffMatrix1D, OperatorAssembler};
use crate::rbf_stencil::{shape_parameters_with, ShapeParams, ShapeRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    /// Krylov when the operator does not depend on time, midpoint otherwise.
    #[default]
    Auto,
    Krylov,
    Midpoint,
}

/// The solver that actually ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Krylov,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Tensor Lagrange on the four nearest nodes of each axis.
    #[default]
    Cubic,
    Multilinear,
}

/// Spatial discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Gaussian RBF-FD weights on the stretched grid.
    #[default]
    Rbf,
    /// Classical central differences on a uniform grid.
    Fdkm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingConfig {
    pub grid: GridConfig,
    pub shape: ShapeRule,
    pub method: Method,
    pub boundary: BoundaryMode,
    pub solver: SolverChoice,
    pub theta_mode: ThetaMode,
    pub krylov: KrylovConfig,
    /// Macro step of the midpoint scheme; rounded so that it divides the maturity.
    pub delta_tau: f64,
    pub substeps: usize,
    pub interpolation: Interpolation,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            shape: ShapeRule::default(),
            method: Method::Rbf,
            boundary: BoundaryMode::Dirichlet,
            solver: SolverChoice::Auto,
            theta_mode: ThetaMode::TimeDependent,
            krylov: KrylovConfig::default(),
            delta_tau: 0.01,
            substeps: 2,
            interpolation: Interpolation::Cubic,
        }
    }
}

impl PricingConfig {
    pub fn with_m(m: [usize; 4]) -> Self {
        Self {
            grid: GridConfig::with_m(m),
            ..Self::default()
        }
    }

    /// Grid settings after the method has had its say (FDKM forces uniform spacing).
    pub fn effective_grid(&self) -> GridConfig {
        let mut g = self.grid.clone();
        if self.method == Method::Fdkm {
            g.spacing = Spacing::Uniform;
        }
        g
    }
}

/// Option values on every grid node at backward time `tau`.
#[derive(Debug, Clone)]
pub struct SolutionField {
    pub grid: Grid4D<f64>,
    pub values: Vec<f64>,
    pub tau: f64,
    /// Shape parameters of the discretization, reused for Greeks.
    pub shape: ShapeParams<f64>,
    pub interpolation: Interpolation,
}

impl SolutionField {
    pub fn new(grid: Grid4D<f64>, values: Vec<f64>, tau: f64, shape: ShapeParams<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid(format!(
                "field has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(n) = values.iter().position(|x| !x.is_finite()) {
            log::error!("non-finite value at node {n}");
            return Err(Error::Unstable {
                tau,
                growth: f64::INFINITY,
            });
        }
        Ok(Self {
            grid,
            values,
            tau,
            shape,
            interpolation: Interpolation::Cubic,
        })
    }

    pub fn at(&self, point: [f64; 4]) -> Result<f64> {
        interpolate_with(self, point, self.interpolation)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub matvecs: usize,
    /// Krylov sub-intervals or midpoint macro steps.
    pub steps: usize,
    pub error_estimate: Option<f64>,
    pub delta_tau: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub field: SolutionField,
    pub solver: Solver,
    pub stats: SolveStats,
    pub assembly: AssemblyMetadata,
    pub assembly_time: Duration,
    pub solve_time: Duration,
}

/// Parameters after applying the theta mode, and the solver that will run.
pub fn resolve_solver(model: &ModelParams, cfg: &PricingConfig) -> Result<(ModelParams, Solver)> {
    let params = match cfg.theta_mode {
        ThetaMode::TimeDependent => model.clone(),
        ThetaMode::Constant => model.with_constant_theta(),
    };
    let constant = params.has_constant_theta();
    let solver = match cfg.solver {
        SolverChoice::Auto if constant => Solver::Krylov,
        SolverChoice::Auto | SolverChoice::Midpoint => Solver::Midpoint,
        SolverChoice::Krylov if constant => Solver::Krylov,
        SolverChoice::Krylov => {
            return Err(Error::Config(
                "krylov needs a time-independent operator: use theta_mode = \"constant\" or constant theta levels"
                    .into(),
            ))
        }
    };
    Ok((params, solver))
}

/// Grid, shape parameters and assembler for a pricing run.
pub fn build_assembler(
    model: &ModelParams,
    option: &OptionSpec,
    cfg: &PricingConfig,
) -> Result<OperatorAssembler<f64>> {
    model.validate()?;
    let focus = GridFocus {
        strike: option.strike,
        v0: model.v0,
        rd0: model.rd0,
        rf0: model.rf0,
    };
    let grid = build_grid::<f64>(&cfg.effective_grid(), &focus)?;
    let shape = match cfg.method {
        Method::Rbf => shape_parameters_with(&grid, &cfg.shape)?,
        Method::Fdkm => ShapeParams::infinite(),
    };
    OperatorAssembler::new(grid, model.clone(), *option, cfg.boundary, shape)
}

/// Solves the pricing PDE up to maturity.
pub fn price(model: &ModelParams, option: &OptionSpec, cfg: &PricingConfig) -> Result<Solution> {
    let (params, solver) = resolve_solver(model, cfg)?;
    let t0 = Instant::now();
    let asm = build_assembler(&params, option, cfg)?;
    let grid = asm.grid().clone();
    // no smoothing of the payoff
    let u0: Vec<f64> = (0..grid.len()).map(|n| option.payoff(grid.point(n)[0])).collect();
    let horizon = option.maturity;
    let (values, stats, assembly, assembly_time, solve_time) = match solver {
        Solver::Krylov => {
            let op = asm.assemble(0.0)?;
            let assembly_time = t0.elapsed();
            let t1 = Instant::now();
            let out = krylov_expm_action(&op.matrix, horizon, &u0, &cfg.krylov)?;
            let stats = SolveStats {
                matvecs: out.matvecs,
                steps: out.steps,
                error_estimate: Some(out.error_estimate),
                delta_tau: None,
            };
            (out.vector, stats, op.metadata, assembly_time, t1.elapsed())
        }
        Solver::Midpoint => {
            let op = asm.assemble_affine()?;
            let assembly_time = t0.elapsed();
            let t1 = Instant::now();
            let steps = midpoint_steps(horizon, cfg.delta_tau)?;
            let mcfg = MidpointConfig {
                substeps: cfg.substeps,
                ..MidpointConfig::for_horizon(horizon, steps)?
            };
            let out = modified_midpoint_solve(&op, &u0, &mcfg)?;
            let stats = SolveStats {
                matvecs: out.matvecs,
                steps,
                error_estimate: None,
                delta_tau: Some(mcfg.delta_tau),
            };
            (out.vector, stats, op.metadata, assembly_time, t1.elapsed())
        }
    };
    log::debug!(
        "priced {:?} on {:?}: {} matvecs in {:.2?}",
        option.kind,
        grid.shape(),
        stats.matvecs,
        solve_time
    );
    let mut field = SolutionField::new(grid, values, horizon, *asm.shape())?;
    field.interpolation = cfg.interpolation;
    Ok(Solution {
        field,
        solver,
        stats,
        assembly,
        assembly_time,
        solve_time,
    })
}

fn midpoint_steps(horizon: f64, delta_tau: f64) -> Result<usize> {
    if !(delta_tau > 0.0) || !delta_tau.is_finite() {
        return Err(Error::Config(format!("delta_tau must be positive, got {delta_tau}")));
    }
    Ok(((horizon / delta_tau).round() as usize).max(1))
}

/// `T * Re(lambda_max)` of the operator the pricing run would use (frozen at `tau = 0`).
pub fn stability(
    model: &ModelParams,
    option: &OptionSpec,
    cfg: &PricingConfig,
    opts: &SpectralOptions,
) -> Result<SpectralReport> {
    let (params, _) = resolve_solver(model, &PricingConfig {
        solver: SolverChoice::Auto,
        ..cfg.clone()
    })?;
    let asm = build_assembler(&params, option, cfg)?;
    let op = asm.assemble(0.0)?;
    estimate_lambda_max(&op.matrix, option.maturity, opts)
}

/// First index and weights of the interpolation stencil on one axis.
fn axis_weights(nodes: &[f64], x: f64, method: Interpolation) -> (usize, Vec<f64>) {
    let m = nodes.len();
    // interval [nodes[i], nodes[i + 1]] containing x
    let i = nodes.partition_point(|&n| n <= x).saturating_sub(1).min(m - 2);
    match method {
        Interpolation::Multilinear => {
            let t = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
            (i, vec![1.0 - t, t])
        }
        Interpolation::Cubic => {
            let width = m.min(4);
            let lo = i.saturating_sub(1).min(m - width);
            let xs = &nodes[lo..lo + width];
            let w = (0..width)
                .map(|a| {
                    (0..width)
                        .filter(|&b| b != a)
                        .map(|b| (x - xs[b]) / (xs[a] - xs[b]))
                        .product()
                })
                .collect();
            (lo, w)
        }
    }
}

fn check_domain(grid: &Grid4D<f64>, point: [f64; 4]) -> Result<()> {
    for (axis, &x) in grid.axes().iter().zip(&point) {
        if !(x >= axis.lower() && x <= axis.upper()) {
            return Err(Error::OutOfDomain {
                axis: axis.kind().name(),
                value: x,
                lower: axis.lower(),
                upper: axis.upper(),
            });
        }
    }
    Ok(())
}

/// Value of the field at `point` using the field's interpolation.
pub fn interpolate(field: &SolutionField, point: [f64; 4]) -> Result<f64> {
    interpolate_with(field, point, field.interpolation)
}

pub fn interpolate_with(field: &SolutionField, point: [f64; 4], method: Interpolation) -> Result<f64> {
    let grid = &field.grid;
    check_domain(grid, point)?;
    let w: Vec<(usize, Vec<f64>)> = grid
        .axes()
        .iter()
        .zip(&point)
        .map(|(a, &x)| axis_weights(a.nodes(), x, method))
        .collect();
    let mut acc = 0.0;
    for (dl, wl) in w[3].1.iter().enumerate() {
        for (dk, wk) in w[2].1.iter().enumerate() {
            for (dj, wj) in w[1].1.iter().enumerate() {
                let mut line = 0.0;
                for (di, wi) in w[0].1.iter().enumerate() {
                    line += wi * field.values[grid.index(w[0].0 + di, w[1].0 + dj, w[2].0 + dk, w[3].0 + dl)];
                }
                acc += wl * wk * wj * line;
            }
        }
    }
    Ok(acc)
}

/// Values and sensitivities on the `(s, v)` nodes at fixed rates. Arrays are `s` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GreeksSlice {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    pub rd: f64,
    pub rf: f64,
    pub value: Vec<f64>,
    pub delta: Vec<f64>,
    /// `dV/dv`.
    pub vega: Vec<f64>,
    pub vanna: Vec<f64>,
}

impl GreeksSlice {
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.s.len() * j
    }
}

/// The `(s, v)` slice of the field at fixed `(rd, rf)`.
pub fn sv_slice(field: &SolutionField, rd: f64, rf: f64) -> Result<Vec<f64>> {
    let grid = &field.grid;
    let [m1, m2, _, _] = grid.shape();
    check_domain(grid, [grid.s()[0], grid.v()[0], rd, rf])?;
    let (k0, wk) = axis_weights(grid.rd(), rd, field.interpolation);
    let (l0, wl) = axis_weights(grid.rf(), rf, field.interpolation);
    let mut out = vec![0.0; m1 * m2];
    for j in 0..m2 {
        for i in 0..m1 {
            let mut acc = 0.0;
            for (dl, a) in wl.iter().enumerate() {
                for (dk, b) in wk.iter().enumerate() {
                    acc += a * b * field.values[grid.index(i, j, k0 + dk, l0 + dl)];
                }
            }
            out[i + m1 * j] = acc;
        }
    }
    Ok(out)
}

fn apply_along(d: &DiffMatrix1D<f64>, f: &[f64], m1: usize, m2: usize, along_s: bool) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for j in 0..m2 {
        for i in 0..m1 {
            let (r, at) = if along_s { (i, j) } else { (j, i) };
            out[i + m1 * j] = d
                .row(r)
                .iter()
                .map(|&(c, w)| w * if along_s { f[c + m1 * at] } else { f[at + m1 * c] })
                .sum();
        }
    }
    out
}

/// Delta, vega and vanna from the first-derivative matrices of the discretization.
pub fn greeks(field: &SolutionField, rd: f64, rf: f64) -> Result<GreeksSlice> {
    let grid = &field.grid;
    let [m1, m2, _, _] = grid.shape();
    let value = sv_slice(field, rd, rf)?;
    let ds = first_derivative_matrix(AxisKind::S, grid.s(), field.shape.c_s)?;
    let dv = first_derivative_matrix(AxisKind::V, grid.v(), field.shape.c_v)?;
    let delta = apply_along(&ds, &value, m1, m2, true);
    let vega = apply_along(&dv, &value, m1, m2, false);
    let vanna = apply_along(&dv, &delta, m1, m2, false);
    Ok(GreeksSlice {
        s: grid.s().to_vec(),
        v: grid.v().to_vec(),
        rd,
        rf,
        value,
        delta,
        vega,
        vanna,
    })
}

/// `(value, delta, vega, vanna)` at an arbitrary point, interpolated from the slice at its rates.
pub fn greeks_at(field: &SolutionField, point: [f64; 4]) -> Result<[f64; 4]> {
    check_domain(&field.grid, point)?;
    let g = greeks(field, point[2], point[3])?;
    let (i0, wi) = axis_weights(&g.s, point[0], field.interpolation);
    let (j0, wj) = axis_weights(&g.v, point[1], field.interpolation);
    let mut out = [0.0; 4];
    for (dj, b) in wj.iter().enumerate() {
        for (di, a) in wi.iter().enumerate() {
            let k = g.index(i0 + di, j0 + dj);
            for (o, arr) in out.iter_mut().zip([&g.value, &g.delta, &g.vega, &g.vanna]) {
                *o += a * b * arr[k];
            }
        }
    }
    Ok(out)
}

/// `|v - v_ref| / |v_ref|`.
pub fn relative_error(v: f64, v_ref: f64) -> Result<f64> {
    if v_ref == 0.0 || !v_ref.is_finite() {
        return Err(invalid(format!("reference value must be nonzero and finite, got {v_ref}")));
    }
    Ok((v - v_ref).abs() / v_ref.abs())
}

/// `|log2((V(4m) - V(2m)) / (V(2m) - V(m)))|`; `None` when the ratio is undefined.
pub fn roc(v_m: f64, v_2m: f64, v_4m: f64) -> Option<f64> {
    let num = v_4m - v_2m;
    let den = v_2m - v_m;
    if den == 0.0 || num == 0.0 || !(num / den).is_finite() {
        return None;
    }
    Some((num / den).abs().log2().abs())
}

/// ROC for every consecutive triple of a doubling ladder.
pub fn roc_ladder(values: &[f64]) -> Vec<Option<f64>> {
    values.windows(3).map(|w| roc(w[0], w[1], w[2])).collect()
}

/// Mean of the defined entries, `None` if there are none.
pub fn mean_roc(rocs: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = rocs.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// One line of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub m: [usize; 4],
    pub v1: f64,
    pub v2: f64,
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub elapsed_secs: f64,
    pub re_lambda_max: Option<f64>,
}

impl ConvergenceRow {
    pub fn new(m: [usize; 4], v: [f64; 2], reference: Option<[f64; 2]>, elapsed: Duration) -> Result<Self> {
        let (eps1, eps2) = match reference {
            Some([r1, r2]) => (Some(relative_error(v[0], r1)?), Some(relative_error(v[1], r2)?)),
            None => (None, None),
        };
        Ok(Self {
            m,
            v1: v[0],
            v2: v[1],
            eps1,
            eps2,
            elapsed_secs: elapsed.as_secs_f64(),
            re_lambda_max: None,
        })
    }
}

/// The two standard query points: `(E, v0, 0.024, 0.024)` and `(E, v0, rd0, rf0)`.
pub fn standard_queries(model: &ModelParams, option: &OptionSpec) -> [[f64; 4]; 2] {
    [
        [option.strike, model.v0, 0.024, 0.024],
        [option.strike, model.v0, model.rd0, model.rf0],
    ]
}
