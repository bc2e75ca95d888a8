//! Closed-form Gaussian RBF-FD weights on non-uniform 1D stencils.
//!
//! Interior first derivatives use a three-node stencil `{x_i - h, x_i, x_i + w h}`,
//! interior second derivatives a four-node stencil
//! `{x_i - w_{-2} h, x_i - h, x_i, x_i + w_{+1} h}`. Both are second order once the
//! shape parameter satisfies `h << c`. Boundary rows use two or three nodes.
//!
//! Formulas are kept in the printed (unsimplified) form. An infinite shape
//! parameter selects the classical non-uniform finite-difference limit.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid4D;
use crate::scalar::Scalar;

/// Smallest accepted step ratio.
const MIN_RATIO: f64 = 1e-8;
/// Condition number above which the collocation oracle refuses to answer.
const MAX_CONDITION: f64 = 1e14;

/// `exp(-(r/c)^2)`.
pub fn gaussian_rbf<T: Scalar>(r: T, c: T) -> Result<T> {
    if !(c > T::zero()) {
        return Err(invalid(format!("shape parameter must be positive, got {c}")));
    }
    if r < T::zero() {
        return Err(invalid(format!("distance must be non-negative, got {r}")));
    }
    let q = r / c;
    Ok((-(q * q)).exp())
}

/// Whether a stencil sits in the regime where the closed-form weights are accurate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `c >= 5h`.
    Flat,
    /// `h <= c < 5h`: accepted, but the O(h^2/c^2) terms are no longer small.
    Marginal,
}

fn check_shape<T: Scalar>(h: T, c: T) -> Result<Regime> {
    if !(h > T::zero()) {
        return Err(invalid(format!("step must be positive, got {h}")));
    }
    if !(c > T::zero()) {
        return Err(invalid(format!("shape parameter must be positive, got {c}")));
    }
    if c < h {
        return Err(invalid(format!("shape parameter {c} below step {h}")));
    }
    Ok(if c < T::lit(5.0) * h {
        Regime::Marginal
    } else {
        Regime::Flat
    })
}

fn check_ratio<T: Scalar>(name: &str, w: T) -> Result<()> {
    if !(w >= T::lit(MIN_RATIO)) {
        return Err(invalid(format!("{name} must be >= {MIN_RATIO:e}, got {w}")));
    }
    Ok(())
}

/// Three-node stencil `{x_i - h, x_i, x_i + omega_plus * h}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilGeometry1<T> {
    pub h: T,
    pub omega_plus: T,
    pub c: T,
}

impl<T: Scalar> StencilGeometry1<T> {
    pub fn new(h: T, omega_plus: T, c: T) -> Result<Self> {
        check_shape(h, c)?;
        check_ratio("omega_plus", omega_plus)?;
        Ok(Self { h, omega_plus, c })
    }

    /// Left/right steps taken from three consecutive nodes.
    pub fn from_nodes(left: T, centre: T, right: T, c: T) -> Result<Self> {
        let h = centre - left;
        Self::new(h, (right - centre) / h, c)
    }

    pub fn regime(&self) -> Regime {
        if self.c < T::lit(5.0) * self.h {
            Regime::Marginal
        } else {
            Regime::Flat
        }
    }
}

/// Four-node stencil `{x_i - w_minus2 * h, x_i - h, x_i, x_i + w_plus1 * h}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilGeometry2<T> {
    pub h: T,
    pub w_minus2: T,
    pub w_plus1: T,
    pub c: T,
}

impl<T: Scalar> StencilGeometry2<T> {
    pub fn new(h: T, w_minus2: T, w_plus1: T, c: T) -> Result<Self> {
        check_shape(h, c)?;
        check_ratio("w_plus1", w_plus1)?;
        if !(w_minus2 > T::one()) {
            return Err(invalid(format!(
                "w_minus2 must exceed 1 (x_(i-2) < x_(i-1)), got {w_minus2}"
            )));
        }
        Ok(Self {
            h,
            w_minus2,
            w_plus1,
            c,
        })
    }

    pub fn from_nodes(x_m2: T, x_m1: T, x: T, x_p1: T, c: T) -> Result<Self> {
        let h = x - x_m1;
        Self::new(h, (x - x_m2) / h, (x_p1 - x) / h, c)
    }

    pub fn regime(&self) -> Regime {
        if self.c < T::lit(5.0) * self.h {
            Regime::Marginal
        } else {
            Regime::Flat
        }
    }
}

/// Stencil weights together with the node positions they apply to (relative to `x_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet<T> {
    pub weights: Vec<T>,
    pub node_offsets: Vec<T>,
}

impl<T: Scalar> WeightSet<T> {
    fn new(weights: Vec<T>, node_offsets: Vec<T>) -> Self {
        debug_assert_eq!(weights.len(), node_offsets.len());
        Self {
            weights,
            node_offsets,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn sum(&self) -> T {
        self.weights.iter().fold(T::zero(), |acc, &w| acc + w)
    }

    /// `sum_j w_j f(x0 + offset_j)`.
    pub fn apply<F: Fn(T) -> T>(&self, x0: T, f: F) -> T {
        self.weights
            .iter()
            .zip(&self.node_offsets)
            .fold(T::zero(), |acc, (&w, &o)| acc + w * f(x0 + o))
    }
}

/// Interior first-derivative weights `(a_{i-1}, a_i, a_{i+1})`.
pub fn first_derivative_weights<T: Scalar>(g: &StencilGeometry1<T>) -> WeightSet<T> {
    let (h, w, c) = (g.h, g.omega_plus, g.c);
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let five = T::lit(5.0);
    let offsets = vec![-h, T::zero(), w * h];
    if c.is_infinite() {
        return WeightSet::new(
            vec![
                -w / (h * (w + one)),
                (w - one) / (h * w),
                one / (h * w * (w + one)),
            ],
            offsets,
        );
    }
    let c2 = c * c;
    let h2 = h * h;
    let a_m = w * (h2 * (two * w - five) - three * c2) / (three * c2 * h * (w + one));
    let a_0 = (w - one) / (h * w) - two * h * (w - one) / (three * c2);
    let a_p = (h2 * (five * w - two) / c2 + three / w) / (three * h * (w + one));
    WeightSet::new(vec![a_m, a_0, a_p], offsets)
}

/// Interior second-derivative weights `(b_{i-2}, b_{i-1}, b_i, b_{i+1})`.
pub fn second_derivative_weights<T: Scalar>(g: &StencilGeometry2<T>) -> WeightSet<T> {
    let (h, wm, wp, c) = (g.h, g.w_minus2, g.w_plus1, g.c);
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let offsets = vec![-wm * h, -h, T::zero(), wp * h];
    let h2 = h * h;
    if c.is_infinite() {
        return WeightSet::new(
            vec![
                two * (wp - one) / (h2 * (wm - one) * wm * (wm + wp)),
                two * (wm - wp) / (h2 * (wm - one) * (wp + one)),
                -two * (wm - wp + one) / (h2 * (wm * wp)),
                two * (wm + one) / (h2 * (wm + wp) * (wp * wp + wp)),
            ],
            offsets,
        );
    }
    let c2 = c * c;
    let b_m2 = ((wp - one) * (two * c2 - h2 * wp) + three * h2 * wm * wm * (wp - one)
        - h2 * wm * ((wp - three) * wp + one))
        / (c2 * h2 * (wm - one) * wm * (wm + wp));
    let mu1 = -wp * (two * c2 + h2 * wm * (wm + three) + three * h2)
        + wm * (two * c2 + h2 * wm + three * h2)
        + h2 * (wm + one) * wp * wp;
    let mu2 = -wm * (two * c2 + h2 * (wp - one) * wp + h2)
        + (wp - one) * (two * c2 - h2 * wp)
        + h2 * (wp - one) * wm * wm;
    let b_m1 = mu1 / (c2 * h2 * (wm - one) * (wp + one));
    let b_0 = mu2 / (c2 * h2 * wm * wp);
    let b_p1 = ((wm + one) * (two * c2 + h2 * wm) + three * h2 * (wm + one) * wp * wp
        - h2 * (wm * (wm + three) + one) * wp)
        / (c2 * h2 * wp * (wp + one) * (wm + wp));
    WeightSet::new(vec![b_m2, b_m1, b_0, b_p1], offsets)
}

/// Two-node first-derivative row for the first grid node: weights on `{x_1, x_1 + h}`.
///
/// The last row uses the same pair on `{x_m - h, x_m}`.
pub fn boundary_first_weights<T: Scalar>(h: T, c: T) -> Result<WeightSet<T>> {
    if !(h > T::zero()) {
        return Err(invalid(format!("step must be positive, got {h}")));
    }
    if !(c > T::zero()) {
        return Err(invalid(format!("shape parameter must be positive, got {c}")));
    }
    let inv_h = T::one() / h;
    let a11 = if c.is_infinite() {
        -inv_h
    } else {
        h / (c * c) - inv_h
    };
    Ok(WeightSet::new(vec![a11, inv_h], vec![T::zero(), h]))
}

/// Two-node second-derivative row `(-4/c^2, 2/c^2)` on `{x_1, x_1 + h}`.
///
/// `h` only positions the second node; the weights depend on `c` alone.
pub fn boundary_second_weights<T: Scalar>(h: T, c: T) -> Result<WeightSet<T>> {
    if !(c > T::zero()) {
        return Err(invalid(format!("shape parameter must be positive, got {c}")));
    }
    if !(h > T::zero()) {
        return Err(invalid(format!("step must be positive, got {h}")));
    }
    let c2 = c * c;
    Ok(WeightSet::new(
        vec![T::lit(-4.0) / c2, T::lit(2.0) / c2],
        vec![T::zero(), h],
    ))
}

/// Three-node second-derivative row for the second grid node, stencil
/// `{x_2 - h, x_2, x_2 + omega1 * h}` with `h = x_2 - x_1`.
pub fn near_boundary_second_weights<T: Scalar>(h: T, omega1: T, c: T) -> Result<WeightSet<T>> {
    check_shape(h, c)?;
    check_ratio("omega1", omega1)?;
    let w = omega1;
    let one = T::one();
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let h2 = h * h;
    let offsets = vec![-h, T::zero(), w * h];
    if c.is_infinite() {
        return Ok(WeightSet::new(
            vec![
                two / (h2 * (w + one)),
                -two / (h2 * w),
                two / (h2 * w * (w + one)),
            ],
            offsets,
        ));
    }
    let c2 = c * c;
    let b21 = two * ((two * (w - two) * w + T::lit(5.0)) / c2 + three / h2) / (three * (w + one));
    let b22 = two * ((-two * w * w + w - two) / c2 - three / h2) / (three * w);
    let b23 = (T::lit(6.0) * c2 + two * h2 * (w * (T::lit(5.0) * w - T::lit(4.0)) + two))
        / (three * c2 * h2 * w * (w + one));
    Ok(WeightSet::new(vec![b21, b22, b23], offsets))
}

/// Per-axis multiples of the largest increment used as shape parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapeRule {
    pub s: f64,
    pub v: f64,
    pub rd: f64,
    pub rf: f64,
}

impl Default for ShapeRule {
    fn default() -> Self {
        Self {
            s: 2.0,
            v: 3.0,
            rd: 3.0,
            rf: 3.0,
        }
    }
}

/// Shape parameters for the four axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeParams<T> {
    pub c_s: T,
    pub c_v: T,
    pub c_rd: T,
    pub c_rf: T,
}

impl<T: Scalar> ShapeParams<T> {
    pub fn as_array(&self) -> [T; 4] {
        [self.c_s, self.c_v, self.c_rd, self.c_rf]
    }

    /// Every axis in the finite-difference limit.
    pub fn infinite() -> Self {
        let inf = T::infinity();
        Self {
            c_s: inf,
            c_v: inf,
            c_rd: inf,
            c_rf: inf,
        }
    }
}

/// `c_s = 2 max(ds)`, `c_v = 3 max(dv)`, `c_rd = 3 max(drd)`, `c_rf = 3 max(drf)`.
pub fn shape_parameters<T: Scalar>(grid: &Grid4D<T>) -> Result<ShapeParams<T>> {
    shape_parameters_with(grid, &ShapeRule::default())
}

pub fn shape_parameters_with<T: Scalar>(grid: &Grid4D<T>, rule: &ShapeRule) -> Result<ShapeParams<T>> {
    let mut c = [T::zero(); 4];
    let factors = [rule.s, rule.v, rule.rd, rule.rf];
    for (k, axis) in grid.axes().iter().enumerate() {
        if axis.len() < 2 {
            return Err(invalid(format!(
                "axis {} needs at least 2 nodes, has {}",
                axis.kind().name(),
                axis.len()
            )));
        }
        let max = axis.max_increment();
        c[k] = T::lit(factors[k]) * max;
    }
    Ok(ShapeParams {
        c_s: c[0],
        c_v: c[1],
        c_rd: c[2],
        c_rf: c[3],
    })
}

/// Where the Gaussian basis functions of the collocation system are centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollocationCenters {
    /// Centred at the stencil nodes.
    Nodes,
    /// Centred at the stencil nodes reflected through `x_i` (`x_i - offset`);
    /// this is the layout whose truncated solution gives the closed-form interior weights.
    Reflected,
}

/// Dense Gaussian-RBF collocation solve for derivative weights at offset 0.
///
/// Row `j` enforces `sum_k w_k phi_j(x_k) = phi_j^(order)(0)` for the basis
/// function `phi_j` centred according to `centers`.
pub fn collocation_weights_oracle(
    node_offsets: &[f64],
    c: f64,
    order: u8,
    centers: CollocationCenters,
) -> Result<WeightSet<f64>> {
    let n = node_offsets.len();
    if !(2..=6).contains(&n) {
        return Err(invalid(format!("collocation needs 2..=6 nodes, got {n}")));
    }
    if order != 1 && order != 2 {
        return Err(invalid(format!("derivative order must be 1 or 2, got {order}")));
    }
    if !(c > 0.0) || !c.is_finite() {
        return Err(invalid(format!("shape parameter must be finite and positive, got {c}")));
    }
    for i in 0..n {
        for j in 0..i {
            if node_offsets[i] == node_offsets[j] {
                return Err(invalid("collocation nodes must be distinct"));
            }
        }
    }
    let centre = |j: usize| match centers {
        CollocationCenters::Nodes => node_offsets[j],
        CollocationCenters::Reflected => -node_offsets[j],
    };
    let c2 = c * c;
    let m = DMatrix::from_fn(n, n, |j, k| {
        let d = (node_offsets[k] - centre(j)) / c;
        (-d * d).exp()
    });
    let rhs = DVector::from_fn(n, |j, _| {
        let d = -centre(j);
        let phi = (-(d * d) / c2).exp();
        match order {
            1 => -2.0 * d / c2 * phi,
            _ => (4.0 * d * d / (c2 * c2) - 2.0 / c2) * phi,
        }
    });
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Conditioning { condition });
    }
    let w = m
        .lu()
        .solve(&rhs)
        .ok_or(Error::Conditioning { condition })?;
    Ok(WeightSet::new(w.iter().copied().collect(), node_offsets.to_vec()))
}

/// Relative distance between two weight vectors, `max|a - b| / max|b|`.
pub fn weight_distance(a: &WeightSet<f64>, b: &WeightSet<f64>) -> f64 {
    let scale = b.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let diff = a
        .weights
        .iter()
        .zip(&b.weights)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}
