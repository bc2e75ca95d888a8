//! Truncated 4D domain and sinh-stretched axes.
//!
//! Nodes are ordered `s` fastest, then `v`, `r_d`, `r_f`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Below this stretch parameter an axis falls back to uniform spacing.
const UNIFORM_XI: f64 = 1e-10;
/// Increments smaller than this fraction of the range are treated as degenerate.
const DEGENERATE_FRACTION: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    S,
    V,
    Rd,
    Rf,
}

impl AxisKind {
    pub const ALL: [AxisKind; 4] = [AxisKind::S, AxisKind::V, AxisKind::Rd, AxisKind::Rf];

    pub fn name(self) -> &'static str {
        match self {
            AxisKind::S => "s",
            AxisKind::V => "v",
            AxisKind::Rd => "rd",
            AxisKind::Rf => "rf",
        }
    }

    pub fn index(self) -> usize {
        match self {
            AxisKind::S => 0,
            AxisKind::V => 1,
            AxisKind::Rd => 2,
            AxisKind::Rf => 3,
        }
    }
}

/// Node count, bounds, concentration point and stretch of one axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec<T> {
    pub m: usize,
    pub lower: T,
    pub upper: T,
    pub focus: T,
    pub xi: T,
}

impl<T: Scalar> AxisSpec<T> {
    pub fn new(m: usize, lower: T, upper: T, focus: T, xi: T) -> Result<Self> {
        if m < 4 {
            return Err(invalid(format!("axis needs at least 4 nodes, got {m}")));
        }
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(invalid(format!("axis bounds must satisfy lower < upper, got [{lower}, {upper}]")));
        }
        if !(xi > T::zero()) || !xi.is_finite() {
            return Err(invalid(format!("stretch parameter must be positive, got {xi}")));
        }
        if !(focus >= lower && focus <= upper) {
            return Err(invalid(format!("focus {focus} outside [{lower}, {upper}]")));
        }
        Ok(Self {
            m,
            lower,
            upper,
            focus,
            xi,
        })
    }

    fn uniform(&self) -> bool {
        self.xi < T::lit(UNIFORM_XI)
    }
}

fn uniform_nodes<T: Scalar>(m: usize, lower: T, upper: T) -> Vec<T> {
    let steps = T::from_usize(m - 1).unwrap();
    (0..m)
        .map(|i| {
            let x = T::from_usize(i).unwrap() / steps;
            lower + (upper - lower) * x
        })
        .collect()
}

/// `x_i` uniform on [0, 1] mapped by
/// `sinh(x asinh(xi (upper - focus)) - (1 - x) asinh(xi (focus - lower))) / xi + focus`.
fn sinh_focus_nodes<T: Scalar>(spec: &AxisSpec<T>) -> Vec<T> {
    if spec.uniform() {
        return uniform_nodes(spec.m, spec.lower, spec.upper);
    }
    let xi = spec.xi;
    let hi = (xi * (spec.upper - spec.focus)).asinh();
    let lo = (xi * (spec.focus - spec.lower)).asinh();
    let steps = T::from_usize(spec.m - 1).unwrap();
    (0..spec.m)
        .map(|i| {
            let x = T::from_usize(i).unwrap() / steps;
            (x * hi - (T::one() - x) * lo).sinh() / xi + spec.focus
        })
        .collect()
}

/// Asset axis concentrated at the strike. Requires `lower < strike < upper`.
pub fn build_s_axis<T: Scalar>(spec: &AxisSpec<T>) -> Result<Vec<T>> {
    if !(spec.focus > spec.lower && spec.focus < spec.upper) {
        return Err(invalid(format!(
            "strike {} must lie strictly inside ({}, {})",
            spec.focus, spec.lower, spec.upper
        )));
    }
    finish("s", spec, sinh_focus_nodes(spec))
}

/// Variance axis concentrated at `v0`. Requires `lower <= v0 < upper`.
pub fn build_v_axis<T: Scalar>(spec: &AxisSpec<T>) -> Result<Vec<T>> {
    if !(spec.focus >= spec.lower && spec.focus < spec.upper) {
        return Err(invalid(format!(
            "v0 {} must lie in [{}, {})",
            spec.focus, spec.lower, spec.upper
        )));
    }
    finish("v", spec, sinh_focus_nodes(spec))
}

/// Rate axis: `r_k = r0 + d sinh(asinh((lower - r0)/d) + (k - 1) dz)` with `d = upper / xi`
/// and `dz` chosen so the last node lands on `upper`.
pub fn build_rate_axis<T: Scalar>(spec: &AxisSpec<T>) -> Result<Vec<T>> {
    build_rate_axis_named("r", spec)
}

fn build_rate_axis_named<T: Scalar>(name: &'static str, spec: &AxisSpec<T>) -> Result<Vec<T>> {
    if !(spec.focus > spec.lower && spec.focus < spec.upper) {
        return Err(invalid(format!(
            "r0 {} must lie strictly inside ({}, {})",
            spec.focus, spec.lower, spec.upper
        )));
    }
    if spec.uniform() {
        return finish(name, spec, uniform_nodes(spec.m, spec.lower, spec.upper));
    }
    let d = spec.upper.abs() / spec.xi;
    if !(d > T::zero()) {
        return Err(invalid("rate axis scale upper/xi must be positive"));
    }
    let r0 = spec.focus;
    let z_lo = ((spec.lower - r0) / d).asinh();
    let z_hi = ((spec.upper - r0) / d).asinh();
    let dz = (z_hi - z_lo) / T::from_usize(spec.m - 1).unwrap();
    let nodes = (0..spec.m)
        .map(|k| r0 + d * (z_lo + T::from_usize(k).unwrap() * dz).sinh())
        .collect();
    finish(name, spec, nodes)
}

/// Snap the endpoints to the bounds and check monotonicity.
fn finish<T: Scalar>(name: &'static str, spec: &AxisSpec<T>, mut nodes: Vec<T>) -> Result<Vec<T>> {
    let range = spec.upper - spec.lower;
    let tol = T::epsilon().sqrt() * range;
    let (first, last) = (nodes[0], nodes[nodes.len() - 1]);
    if (first - spec.lower).abs() > tol || (last - spec.upper).abs() > tol {
        return Err(Error::GridDegenerate {
            axis: name,
            detail: format!("endpoints {first}, {last} miss bounds [{}, {}]", spec.lower, spec.upper),
        });
    }
    nodes[0] = spec.lower;
    let n = nodes.len();
    nodes[n - 1] = spec.upper;
    let min_step = T::lit(DEGENERATE_FRACTION) * range;
    for i in 1..n {
        let dx = nodes[i] - nodes[i - 1];
        if !(dx >= min_step) {
            return Err(Error::GridDegenerate {
                axis: name,
                detail: format!("increment {dx} between nodes {} and {i}", i - 1),
            });
        }
    }
    Ok(nodes)
}

/// One axis of a tensor grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis<T> {
    kind: AxisKind,
    nodes: Vec<T>,
    increments: Vec<T>,
}

impl<T: Scalar> Axis<T> {
    pub fn new(kind: AxisKind, nodes: Vec<T>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(invalid(format!("axis {} needs at least 2 nodes", kind.name())));
        }
        let increments: Vec<T> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(i) = increments.iter().position(|&d| !(d > T::zero())) {
            return Err(Error::GridDegenerate {
                axis: kind.name(),
                detail: format!("non-increasing nodes at index {}", i + 1),
            });
        }
        Ok(Self {
            kind,
            nodes,
            increments,
        })
    }

    pub fn kind(&self) -> AxisKind {
        self.kind
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn increments(&self) -> &[T] {
        &self.increments
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lower(&self) -> T {
        self.nodes[0]
    }

    pub fn upper(&self) -> T {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn max_increment(&self) -> T {
        self.increments.iter().copied().fold(T::zero(), T::max)
    }

    pub fn min_increment(&self) -> T {
        self.increments.iter().copied().fold(T::infinity(), T::min)
    }

    /// Index `i` of the smallest increment `x_{i+1} - x_i`.
    pub fn argmin_increment(&self) -> usize {
        let mut best = 0;
        for (i, &d) in self.increments.iter().enumerate() {
            if d < self.increments[best] {
                best = i;
            }
        }
        best
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: T) -> usize {
        let mut best = 0;
        for (i, &n) in self.nodes.iter().enumerate() {
            if (n - x).abs() < (self.nodes[best] - x).abs() {
                best = i;
            }
        }
        best
    }
}

/// Tensor grid on `[s] x [v] x [r_d] x [r_f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid4D<T> {
    axes: [Axis<T>; 4],
}

impl<T: Scalar> Grid4D<T> {
    pub fn from_nodes(s: Vec<T>, v: Vec<T>, rd: Vec<T>, rf: Vec<T>) -> Result<Self> {
        Ok(Self {
            axes: [
                Axis::new(AxisKind::S, s)?,
                Axis::new(AxisKind::V, v)?,
                Axis::new(AxisKind::Rd, rd)?,
                Axis::new(AxisKind::Rf, rf)?,
            ],
        })
    }

    pub fn axes(&self) -> &[Axis<T>; 4] {
        &self.axes
    }

    pub fn axis(&self, kind: AxisKind) -> &Axis<T> {
        &self.axes[kind.index()]
    }

    pub fn s(&self) -> &[T] {
        self.axes[0].nodes()
    }

    pub fn v(&self) -> &[T] {
        self.axes[1].nodes()
    }

    pub fn rd(&self) -> &[T] {
        self.axes[2].nodes()
    }

    pub fn rf(&self) -> &[T] {
        self.axes[3].nodes()
    }

    pub fn shape(&self) -> [usize; 4] {
        [
            self.axes[0].len(),
            self.axes[1].len(),
            self.axes[2].len(),
            self.axes[3].len(),
        ]
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of `(i, j, k, l)`; `s` varies fastest.
    pub fn index(&self, i: usize, j: usize, k: usize, l: usize) -> usize {
        let [m1, m2, m3, _] = self.shape();
        i + m1 * (j + m2 * (k + m3 * l))
    }

    /// Inverse of [`Grid4D::index`].
    pub fn multi_index(&self, n: usize) -> [usize; 4] {
        let [m1, m2, m3, _] = self.shape();
        let i = n % m1;
        let rest = n / m1;
        let j = rest % m2;
        let rest = rest / m2;
        [i, j, rest % m3, rest / m3]
    }

    /// Coordinates of flat node `n`.
    pub fn point(&self, n: usize) -> [T; 4] {
        let [i, j, k, l] = self.multi_index(n);
        [self.s()[i], self.v()[j], self.rd()[k], self.rf()[l]]
    }
}

/// How nodes are distributed along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Stretched,
    Uniform,
}

/// Grid settings as they appear in an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub m: [usize; 4],
    /// `s_max` as a multiple of the strike.
    pub s_max_factor: f64,
    pub v_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub xi_s: f64,
    pub xi_v: f64,
    pub xi_rd: f64,
    pub xi_rf: f64,
    pub spacing: Spacing,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            m: [8, 6, 6, 6],
            s_max_factor: 14.0,
            v_max: 10.0,
            r_min: -1.0,
            r_max: 1.0,
            xi_s: 0.1,
            xi_v: 50.0,
            xi_rd: 500.0,
            xi_rf: 500.0,
            spacing: Spacing::Stretched,
        }
    }
}

impl GridConfig {
    pub fn with_m(m: [usize; 4]) -> Self {
        Self {
            m,
            ..Self::default()
        }
    }
}

/// Points the axes concentrate around.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridFocus {
    pub strike: f64,
    pub v0: f64,
    pub rd0: f64,
    pub rf0: f64,
}

/// Builds all four axes from `config`, concentrated around `focus`.
pub fn build_grid<T: Scalar>(config: &GridConfig, focus: &GridFocus) -> Result<Grid4D<T>> {
    let lit = T::lit;
    let uniform = config.spacing == Spacing::Uniform;
    // a zero stretch selects the uniform fallback in every builder
    let xi = |x: f64| if uniform { T::zero() } else { lit(x) };
    let spec = |m, lo: f64, hi: f64, f: f64, x: T| -> Result<AxisSpec<T>> {
        if m < 4 {
            return Err(invalid(format!("axis needs at least 4 nodes, got {m}")));
        }
        if !(lo < hi) {
            return Err(invalid(format!("axis bounds must satisfy lower < upper, got [{lo}, {hi}]")));
        }
        if !(f >= lo && f <= hi) {
            return Err(invalid(format!("focus {f} outside [{lo}, {hi}]")));
        }
        Ok(AxisSpec {
            m,
            lower: lit(lo),
            upper: lit(hi),
            focus: lit(f),
            xi: x,
        })
    };
    let s_max = config.s_max_factor * focus.strike;
    let s = build_s_axis(&spec(config.m[0], 0.0, s_max, focus.strike, xi(config.xi_s))?)?;
    let v = build_v_axis(&spec(config.m[1], 0.0, config.v_max, focus.v0, xi(config.xi_v))?)?;
    let rd = build_rate_axis_named(
        "rd",
        &spec(config.m[2], config.r_min, config.r_max, focus.rd0, xi(config.xi_rd))?,
    )?;
    let rf = build_rate_axis_named(
        "rf",
        &spec(config.m[3], config.r_min, config.r_max, focus.rf0, xi(config.xi_rf))?,
    )?;
    Grid4D::from_nodes(s, v, rd, rf)
}
