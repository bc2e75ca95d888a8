//! Eigenvalue diagnostics for the semi-discrete operator.
//!
//! The reported `re_lambda_max` is the real part of the eigenvalue of largest
//! modulus, found by explicitly restarted Arnoldi. The largest eigenvalue of the
//! symmetric part `(A^T + A) / 2` is reported next to it; a negative value is the
//! sufficient stability criterion for a constant operator.

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::integrators::krylov::{arnoldi, norm2};
use crate::sparse::{CsrMatrix, LinearOperator};

type Complex64 = nalgebra::Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    LargestModulus,
    LargestReal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralOptions {
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Relative residual `|h_{k+1,k} y_k| / |lambda|` accepted as converged.
    pub tol: f64,
    pub symmetric_part: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            krylov_dim: 40,
            max_restarts: 300,
            tol: 1e-8,
            symmetric_part: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenEstimate {
    pub value: Complex64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Real part of the eigenvalue of largest modulus.
    pub re_lambda_max: f64,
    pub dominant: EigenEstimate,
    /// Largest eigenvalue of `(A^T + A) / 2`, when requested.
    pub symmetric_max: Option<EigenEstimate>,
    pub iterations: usize,
    pub converged: bool,
}

struct SymmetricPart<'a> {
    a: &'a CsrMatrix<f64>,
    at: CsrMatrix<f64>,
}

impl LinearOperator<f64> for SymmetricPart<'_> {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mut t = vec![0.0; y.len()];
        self.a.matvec(x, y);
        self.at.matvec(x, &mut t);
        y.iter_mut().zip(&t).for_each(|(a, b)| *a = 0.5 * (*a + b));
    }

    fn norm1(&self) -> f64 {
        0.5 * (self.a.norm1() + self.at.norm1())
    }
}

fn pick(values: &[Complex64], target: Target) -> usize {
    let key = |z: &Complex64| match target {
        Target::LargestModulus => z.norm(),
        Target::LargestReal => z.re,
    };
    let mut best = 0;
    for (i, z) in values.iter().enumerate() {
        if key(z) > key(&values[best]) {
            best = i;
        }
    }
    best
}

/// Eigenvector of the small Hessenberg matrix for `lambda`, by two steps of inverse iteration.
fn ritz_vector(h: &DMatrix<f64>, lambda: Complex64) -> Vec<Complex64> {
    let k = h.nrows();
    let scale = h.abs().max().max(1.0);
    let shift = lambda + Complex64::new(scale * 1e-10, scale * 1e-10);
    let m = DMatrix::from_fn(k, k, |i, j| {
        let d = if i == j { shift } else { Complex64::new(0.0, 0.0) };
        Complex64::new(h[(i, j)], 0.0) - d
    });
    let lu = m.lu();
    let mut y = nalgebra::DVector::from_element(k, Complex64::new(1.0, 0.0));
    for _ in 0..2 {
        if let Some(next) = lu.solve(&y) {
            let n = next.norm();
            if n > 0.0 && n.is_finite() {
                y = next / Complex64::new(n, 0.0);
            }
        }
    }
    y.iter().copied().collect()
}

/// Explicitly restarted Arnoldi for one extreme eigenvalue.
pub fn extreme_eigenvalue<A: LinearOperator<f64> + ?Sized>(
    a: &A,
    target: Target,
    opts: &SpectralOptions,
) -> Result<EigenEstimate> {
    let n = a.dim();
    if n == 0 {
        return Err(invalid("empty operator"));
    }
    let k = opts.krylov_dim.min(n).max(1);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    let btol = 1e-14 * a.norm1().max(f64::MIN_POSITIVE);
    let mut last = EigenEstimate {
        value: Complex64::new(0.0, 0.0),
        residual: f64::INFINITY,
        iterations: 0,
        converged: false,
    };
    for it in 1..=opts.max_restarts.max(1) {
        let arn = arnoldi(a, &v, k, btol)?;
        let kk = arn.k;
        let hk = arn.h.view((0, 0), (kk, kk)).into_owned();
        let values: Vec<Complex64> = hk.clone().complex_eigenvalues().iter().copied().collect();
        let idx = pick(&values, target);
        let lambda = values[idx];
        let y = ritz_vector(&hk, lambda);
        let link = if arn.breakdown { 0.0 } else { arn.h[(kk, kk - 1)] };
        let residual = link * y[kk - 1].norm();
        let rel = residual / lambda.norm().max(f64::MIN_POSITIVE);
        last = EigenEstimate {
            value: lambda,
            residual,
            iterations: it,
            converged: rel <= opts.tol || arn.breakdown,
        };
        if last.converged {
            break;
        }
        // restart from the real combination of the Ritz vector's parts
        let mut next = vec![0.0; n];
        for (j, q) in arn.basis.iter().take(kk).enumerate() {
            let c = y[j].re + y[j].im;
            next.iter_mut().zip(q).for_each(|(x, b)| *x += c * b);
        }
        if norm2(&next) == 0.0 {
            break;
        }
        v = next;
    }
    Ok(last)
}

/// Dominant-eigenvalue report for the constant operator `scale * A`.
pub fn estimate_lambda_max(a: &CsrMatrix<f64>, scale: f64, opts: &SpectralOptions) -> Result<SpectralReport> {
    let dominant = extreme_eigenvalue(a, Target::LargestModulus, opts)?;
    let symmetric_max = if opts.symmetric_part {
        let sym = SymmetricPart {
            a,
            at: a.transpose(),
        };
        let mut e = extreme_eigenvalue(&sym, Target::LargestReal, opts)?;
        e.value *= scale;
        e.residual *= scale.abs();
        Some(e)
    } else {
        None
    };
    let iterations = dominant.iterations + symmetric_max.as_ref().map_or(0, |e| e.iterations);
    let converged = dominant.converged;
    let dominant = EigenEstimate {
        value: dominant.value * scale,
        residual: dominant.residual * scale.abs(),
        ..dominant
    };
    Ok(SpectralReport {
        re_lambda_max: dominant.value.re,
        dominant,
        symmetric_max,
        iterations,
        converged,
    })
}
