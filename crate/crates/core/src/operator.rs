//! 1D differentiation matrices and the 4D spatial operator.
//!
//! Every term of the pricing operator is a product of at most two 1D matrices
//! (Kronecker-composed with identities on the other axes) times a coefficient
//! evaluated at the row's node. Rows are assembled independently, so assembly
//! parallelizes over rows without any global sparse product.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxisKind, Grid4D};
use crate::model::{ModelParams, OptionKind, OptionSpec};
use crate::rbf_stencil::{
    boundary_first_weights, boundary_second_weights, first_derivative_weights,
    near_boundary_second_weights, second_derivative_weights, ShapeParams, StencilGeometry1,
    StencilGeometry2,
};
use crate::scalar::Scalar;
use crate::sparse::{CsrMatrix, LinearOperator};

/// How boundary nodes are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// `V = 0` pinned at `s = 0`, `v = v_max` pinned; the remaining faces drop the
    /// second derivative normal to the face. Call options only.
    #[default]
    Dirichlet,
    /// No pinned rows; the normal second derivative is dropped on every face.
    NeumannFlux,
    /// The full PDE at every node, using the one-sided boundary stencils.
    Abc,
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BoundaryMode::Dirichlet => "dirichlet",
            BoundaryMode::NeumannFlux => "neumann_flux",
            BoundaryMode::Abc => "abc",
        })
    }
}

/// Sparse `m x m` differentiation matrix along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMatrix1D<T> {
    axis: AxisKind,
    order: u8,
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> DiffMatrix1D<T> {
    pub fn axis(&self) -> AxisKind {
        self.axis
    }

    pub fn order(&self) -> u8 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[(usize, T)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.rows[i]
            .iter()
            .find(|e| e.0 == j)
            .map_or(T::zero(), |e| e.1)
    }

    pub fn apply(&self, f: &[T]) -> Vec<T> {
        self.rows
            .iter()
            .map(|r| r.iter().fold(T::zero(), |acc, &(j, w)| acc + w * f[j]))
            .collect()
    }

    pub fn to_csr(&self) -> CsrMatrix<T> {
        CsrMatrix::from_rows(self.len(), self.rows.clone()).expect("square matrix")
    }

    /// Copy with the first and last rows emptied.
    pub fn without_end_rows(&self) -> Self {
        let mut out = self.clone();
        let m = out.rows.len();
        out.rows[0].clear();
        out.rows[m - 1].clear();
        out
    }
}

fn degenerate(axis: AxisKind, e: Error) -> Error {
    match e {
        Error::InvalidArgument(detail) => Error::GridDegenerate {
            axis: axis.name(),
            detail,
        },
        other => other,
    }
}

/// Three-node interior rows, two-node end rows.
pub fn first_derivative_matrix<T: Scalar>(axis: AxisKind, x: &[T], c: T) -> Result<DiffMatrix1D<T>> {
    let m = x.len();
    if m < 3 {
        return Err(crate::error::invalid(format!(
            "first derivative matrix needs 3 nodes, got {m}"
        )));
    }
    let mut rows = Vec::with_capacity(m);
    let h0 = x[1] - x[0];
    let b = boundary_first_weights(h0, c).map_err(|e| degenerate(axis, e))?;
    rows.push(vec![(0, b.weights[0]), (1, b.weights[1])]);
    for i in 1..m - 1 {
        let g = StencilGeometry1::from_nodes(x[i - 1], x[i], x[i + 1], c).map_err(|e| degenerate(axis, e))?;
        let w = first_derivative_weights(&g);
        rows.push(vec![
            (i - 1, w.weights[0]),
            (i, w.weights[1]),
            (i + 1, w.weights[2]),
        ]);
    }
    let hl = x[m - 1] - x[m - 2];
    let b = boundary_first_weights(hl, c).map_err(|e| degenerate(axis, e))?;
    rows.push(vec![(m - 2, b.weights[0]), (m - 1, b.weights[1])]);
    Ok(DiffMatrix1D { axis, order: 1, rows })
}

/// Four-node interior rows from the third node on, a three-node second row and two-node end rows.
pub fn second_derivative_matrix<T: Scalar>(axis: AxisKind, x: &[T], c: T) -> Result<DiffMatrix1D<T>> {
    let m = x.len();
    if m < 4 {
        return Err(crate::error::invalid(format!(
            "second derivative matrix needs 4 nodes, got {m}"
        )));
    }
    let mut rows = Vec::with_capacity(m);
    let h0 = x[1] - x[0];
    let b = boundary_second_weights(h0, c).map_err(|e| degenerate(axis, e))?;
    rows.push(vec![(0, b.weights[0]), (1, b.weights[1])]);
    let w = near_boundary_second_weights(h0, (x[2] - x[1]) / h0, c).map_err(|e| degenerate(axis, e))?;
    rows.push(vec![(0, w.weights[0]), (1, w.weights[1]), (2, w.weights[2])]);
    for i in 2..m - 1 {
        let g = StencilGeometry2::from_nodes(x[i - 2], x[i - 1], x[i], x[i + 1], c)
            .map_err(|e| degenerate(axis, e))?;
        let w = second_derivative_weights(&g);
        rows.push(vec![
            (i - 2, w.weights[0]),
            (i - 1, w.weights[1]),
            (i, w.weights[2]),
            (i + 1, w.weights[3]),
        ]);
    }
    // the last row mirrors the first: weights (-4/c^2, 2/c^2) on (x_{m-1}, x_m)
    let b = boundary_second_weights(x[m - 1] - x[m - 2], c).map_err(|e| degenerate(axis, e))?;
    rows.push(vec![(m - 2, b.weights[0]), (m - 1, b.weights[1])]);
    Ok(DiffMatrix1D { axis, order: 2, rows })
}

/// Coefficients of the fifteen operator terms at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients<T> {
    pub ss: T,
    pub vv: T,
    pub dd: T,
    pub ff: T,
    pub sv: T,
    pub sd: T,
    pub sf: T,
    pub vd: T,
    pub vf: T,
    pub df: T,
    pub s: T,
    pub v: T,
    pub d: T,
    pub f: T,
    pub source: T,
}

impl<T: Scalar> Coefficients<T> {
    pub fn at(p: &ModelParams, point: [T; 4], theta_d: T, theta_f: T) -> Self {
        let lit = T::lit;
        let [s, v, rd, rf] = point;
        let sq = v.max(T::zero()).sqrt();
        let half = lit(0.5);
        let (g, ed, ef) = (lit(p.gamma), lit(p.eta_d), lit(p.eta_f));
        let r = p.correlation.pairs();
        Self {
            ss: half * s * s * v,
            vv: half * g * g * v,
            dd: half * ed * ed,
            ff: half * ef * ef,
            sv: lit(r.sv) * g * s * v,
            sd: lit(r.sd) * ed * s * sq,
            sf: lit(r.sf) * ef * s * sq,
            vd: lit(r.vd) * g * ed * sq,
            vf: lit(r.vf) * g * ef * sq,
            df: lit(r.df) * ed * ef,
            s: (rd - rf) * s,
            v: lit(p.kappa) * (lit(p.vbar) - v),
            d: lit(p.lambda_d) * (theta_d - rd),
            f: lit(p.lambda_f) * (theta_f - rf) - lit(r.sf) * ef * sq,
            source: -rd,
        }
    }

    fn all(&self) -> [T; 15] {
        [
            self.ss, self.vv, self.dd, self.ff, self.sv, self.sd, self.sf, self.vd, self.vf, self.df,
            self.s, self.v, self.d, self.f, self.source,
        ]
    }
}

/// Derivative factors of one term: `(axis, order)` pairs, at most two.
const TERMS: [&[(usize, u8)]; 15] = [
    &[(0, 2)],
    &[(1, 2)],
    &[(2, 2)],
    &[(3, 2)],
    &[(0, 1), (1, 1)],
    &[(0, 1), (2, 1)],
    &[(0, 1), (3, 1)],
    &[(1, 1), (2, 1)],
    &[(1, 1), (3, 1)],
    &[(2, 1), (3, 1)],
    &[(0, 1)],
    &[(1, 1)],
    &[(2, 1)],
    &[(3, 1)],
    &[],
];

/// Bookkeeping attached to an assembled operator.
#[derive(Debug, Clone, PartialEq)]
pub struct AssemblyMetadata {
    pub shape: [usize; 4],
    pub nnz: usize,
    pub bandwidth: usize,
    pub mode: BoundaryMode,
    /// Axis order from fastest to slowest varying.
    pub ordering: [AxisKind; 4],
    pub pinned_rows: usize,
}

/// The assembled `N x N` matrix at one backward time.
#[derive(Debug, Clone)]
pub struct SparseOperator<T> {
    pub matrix: CsrMatrix<T>,
    pub tau: T,
    pub time_dependent: bool,
    pub metadata: AssemblyMetadata,
}

impl<T: Scalar> LinearOperator<T> for SparseOperator<T> {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        self.matrix.matvec(x, y)
    }

    fn norm1(&self) -> T {
        self.matrix.norm1()
    }
}

/// Grid, model and discretization choices needed to build operators.
#[derive(Debug, Clone)]
pub struct OperatorAssembler<T> {
    grid: Grid4D<T>,
    params: ModelParams,
    option: OptionSpec,
    mode: BoundaryMode,
    shape: ShapeParams<T>,
    d1: [DiffMatrix1D<T>; 4],
    d2: [DiffMatrix1D<T>; 4],
    pinned: Vec<bool>,
}

impl<T: Scalar> OperatorAssembler<T> {
    pub fn new(
        grid: Grid4D<T>,
        params: ModelParams,
        option: OptionSpec,
        mode: BoundaryMode,
        shape: ShapeParams<T>,
    ) -> Result<Self> {
        if mode == BoundaryMode::Dirichlet && option.kind == OptionKind::Put {
            return Err(Error::Config(
                "dirichlet boundaries pin V = 0 at s = 0, which is wrong for a put; use abc or neumann_flux".into(),
            ));
        }
        if grid.v()[0] < T::zero() {
            return Err(Error::GridDegenerate {
                axis: "v",
                detail: format!("negative variance node {}", grid.v()[0]),
            });
        }
        let c = shape.as_array();
        let mut d1 = Vec::with_capacity(4);
        let mut d2 = Vec::with_capacity(4);
        for (k, axis) in grid.axes().iter().enumerate() {
            d1.push(first_derivative_matrix(axis.kind(), axis.nodes(), c[k])?);
            let full = second_derivative_matrix(axis.kind(), axis.nodes(), c[k])?;
            d2.push(match mode {
                BoundaryMode::Abc => full,
                _ => full.without_end_rows(),
            });
        }
        let [m1, m2, _, _] = grid.shape();
        let pinned = (0..grid.len())
            .map(|n| {
                mode == BoundaryMode::Dirichlet && {
                    let i = n % m1;
                    let j = (n / m1) % m2;
                    i == 0 || j == m2 - 1
                }
            })
            .collect();
        Ok(Self {
            grid,
            params,
            option,
            mode,
            shape,
            d1: d1.try_into().unwrap(),
            d2: d2.try_into().unwrap(),
            pinned,
        })
    }

    pub fn grid(&self) -> &Grid4D<T> {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn option(&self) -> &OptionSpec {
        &self.option
    }

    pub fn mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn shape(&self) -> &ShapeParams<T> {
        &self.shape
    }

    pub fn first_derivative(&self, axis: AxisKind) -> &DiffMatrix1D<T> {
        &self.d1[axis.index()]
    }

    /// Second-derivative matrix as used in the operator (end rows dropped unless in abc mode).
    pub fn second_derivative(&self, axis: AxisKind) -> &DiffMatrix1D<T> {
        &self.d2[axis.index()]
    }

    pub fn pinned(&self) -> &[bool] {
        &self.pinned
    }

    /// Same inputs, different boundary treatment.
    pub fn with_mode(&self, mode: BoundaryMode) -> Result<Self> {
        Self::new(
            self.grid.clone(),
            self.params.clone(),
            self.option,
            mode,
            self.shape,
        )
    }

    fn strides(&self) -> [usize; 4] {
        let [m1, m2, m3, _] = self.grid.shape();
        [1, m1, m1 * m2, m1 * m2 * m3]
    }

    fn factor(&self, axis: usize, order: u8) -> &DiffMatrix1D<T> {
        if order == 1 {
            &self.d1[axis]
        } else {
            &self.d2[axis]
        }
    }

    /// Row `n` of `sum_t coeff_t(n) * term_t`, unmerged.
    fn row_entries(&self, n: usize, coeffs: &[T; 15], out: &mut Vec<(usize, T)>) {
        let idx = self.grid.multi_index(n);
        let strides = self.strides();
        for (t, factors) in TERMS.iter().enumerate() {
            let c = coeffs[t];
            if c == T::zero() {
                continue;
            }
            match *factors {
                [] => out.push((n, c)),
                &[(a, oa)] => {
                    for &(j, w) in self.factor(a, oa).row(idx[a]) {
                        let col = n - idx[a] * strides[a] + j * strides[a];
                        out.push((col, c * w));
                    }
                }
                &[(a, oa), (b, ob)] => {
                    let ra = self.factor(a, oa).row(idx[a]);
                    let rb = self.factor(b, ob).row(idx[b]);
                    let base = n - idx[a] * strides[a] - idx[b] * strides[b];
                    for &(ja, wa) in ra {
                        for &(jb, wb) in rb {
                            out.push((base + ja * strides[a] + jb * strides[b], c * wa * wb));
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
    }

    fn build<F>(&self, coeffs: F) -> Result<CsrMatrix<T>>
    where
        F: Fn(usize) -> [T; 15] + Sync,
    {
        let rows: Vec<Vec<(usize, T)>> = (0..self.grid.len())
            .into_par_iter()
            .map(|n| {
                let mut out = Vec::new();
                if !self.pinned[n] {
                    self.row_entries(n, &coeffs(n), &mut out);
                }
                out
            })
            .collect();
        if let Some((n, _)) = rows
            .iter()
            .enumerate()
            .find_map(|(n, r)| r.iter().find(|e| !e.1.is_finite()).map(|e| (n, e)))
        {
            return Err(Error::Assembly(format!(
                "non-finite coefficient in row {n} at {:?}",
                self.grid.point(n).map(|x| x.as_f64())
            )));
        }
        CsrMatrix::from_rows(self.grid.len(), rows)
    }

    fn wrap(&self, matrix: CsrMatrix<T>, tau: T) -> SparseOperator<T> {
        let metadata = AssemblyMetadata {
            shape: self.grid.shape(),
            nnz: matrix.nnz(),
            bandwidth: matrix.bandwidth(),
            mode: self.mode,
            ordering: AxisKind::ALL,
            pinned_rows: self.pinned.iter().filter(|&&p| p).count(),
        };
        SparseOperator {
            matrix,
            tau,
            time_dependent: !self.params.has_constant_theta(),
            metadata,
        }
    }

    /// Operator with the mean-reversion levels held at the given values.
    pub fn assemble_with_theta(&self, theta_d: T, theta_f: T) -> Result<SparseOperator<T>> {
        let m = self.build(|n| Coefficients::at(&self.params, self.grid.point(n), theta_d, theta_f).all())?;
        Ok(self.wrap(m, T::nan()))
    }

    /// Operator at backward time `tau`.
    pub fn assemble(&self, tau: T) -> Result<SparseOperator<T>> {
        let mut op = self.assemble_with_theta(self.params.theta_d(tau), self.params.theta_f(tau))?;
        op.tau = tau;
        Ok(op)
    }

    /// Operator with both levels frozen at their `tau = 1` values.
    pub fn assemble_constant_theta(&self) -> Result<SparseOperator<T>> {
        let (d, f) = self.params.theta_constant_approx();
        self.assemble_with_theta(T::lit(d), T::lit(f))
    }

    /// Splits the operator as `base + theta_d(tau) B_d + theta_f(tau) B_f`.
    pub fn assemble_affine(&self) -> Result<AffineOperator<T>> {
        let base = self.assemble_with_theta(T::zero(), T::zero())?;
        let only = |k: usize, value: T| {
            move |_n: usize| {
                let mut c = [T::zero(); 15];
                c[k] = value;
                c
            }
        };
        let bd = self.build(only(12, T::lit(self.params.lambda_d)))?;
        let bf = self.build(only(13, T::lit(self.params.lambda_f)))?;
        Ok(AffineOperator {
            base: base.matrix,
            bd,
            bf,
            params: self.params.clone(),
            metadata: base.metadata,
        })
    }
}

/// `assemble_operator` for a ready assembler.
pub fn assemble_operator<T: Scalar>(asm: &OperatorAssembler<T>, tau: T) -> Result<SparseOperator<T>> {
    asm.assemble(tau)
}

/// Re-assembles `op` (built by `asm`) under a different boundary mode.
pub fn impose_boundaries<T: Scalar>(
    op: &SparseOperator<T>,
    asm: &OperatorAssembler<T>,
    mode: BoundaryMode,
) -> Result<SparseOperator<T>> {
    if op.metadata.shape != asm.grid().shape() {
        return Err(Error::Config("operator and assembler grids differ".into()));
    }
    let other = asm.with_mode(mode)?;
    if op.tau.is_nan() {
        let (d, f) = asm.params().theta_constant_approx();
        other.assemble_with_theta(T::lit(d), T::lit(f))
    } else {
        other.assemble(op.tau)
    }
}

/// Time-dependent operator in affine form.
#[derive(Debug, Clone)]
pub struct AffineOperator<T> {
    pub base: CsrMatrix<T>,
    pub bd: CsrMatrix<T>,
    pub bf: CsrMatrix<T>,
    pub params: ModelParams,
    pub metadata: AssemblyMetadata,
}

impl<T: Scalar> AffineOperator<T> {
    pub fn dim(&self) -> usize {
        self.base.nrows()
    }

    /// `y = A(tau) x`.
    pub fn apply_at(&self, tau: T, x: &[T], y: &mut [T], scratch: &mut [T]) {
        self.base.matvec(x, y);
        let td = self.params.theta_d(tau);
        if td != T::zero() {
            self.bd.matvec(x, scratch);
            y.iter_mut().zip(scratch.iter()).for_each(|(a, b)| *a = *a + td * *b);
        }
        let tf = self.params.theta_f(tau);
        if tf != T::zero() {
            self.bf.matvec(x, scratch);
            y.iter_mut().zip(scratch.iter()).for_each(|(a, b)| *a = *a + tf * *b);
        }
    }

    /// The matrix at `tau` as a single sparse matrix.
    pub fn materialize(&self, tau: T) -> Result<CsrMatrix<T>> {
        let a = self.base.linear_combination(T::one(), &self.bd, self.params.theta_d(tau))?;
        a.linear_combination(T::one(), &self.bf, self.params.theta_f(tau))
    }
}
