//! Action of the matrix exponential on a vector by Arnoldi projection.
//!
//! Each projection builds an orthonormal basis of
//! `span{w, A w, ..., A^(Y-1) w}`, forms the small Hessenberg matrix `H_Y` and
//! returns `beta V_Y exp(t H_Y) e_1`. Over a long horizon one projection is not
//! enough for a stiff operator, so by default the horizon is split into
//! sub-intervals chosen from the a-posteriori error estimate of each projection.

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::integrators::expm::expm;
use crate::sparse::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrylovMode {
    /// Split the horizon into sub-intervals until each meets the tolerance.
    Adaptive,
    /// One projection over the whole horizon; error if the estimate exceeds the tolerance.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovConfig {
    /// Subspace dimension `Y`; clamped to the problem size.
    pub dim: usize,
    /// Breakdown threshold on `h_{j+1,j}`, relative to `||A||_1`.
    pub breakdown_tol: f64,
    /// Error tolerance relative to `||v0||`.
    pub tol: f64,
    pub mode: KrylovMode,
    pub max_steps: usize,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            breakdown_tol: 1e-14,
            tol: 1e-8,
            mode: KrylovMode::Adaptive,
            max_steps: 100_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub vector: Vec<f64>,
    /// Number of projections (sub-intervals) used.
    pub steps: usize,
    pub rejected: usize,
    pub matvecs: usize,
    /// Sum of local error estimates, absolute.
    pub error_estimate: f64,
    /// Dimension actually used in the last projection (smaller after a breakdown).
    pub last_dim: usize,
}

/// Orthonormal Krylov basis and Hessenberg matrix.
#[derive(Debug, Clone)]
pub struct Arnoldi {
    /// `k + 1` basis vectors (only `k` if the process broke down).
    pub basis: Vec<Vec<f64>>,
    /// `(k + 1) x k` upper Hessenberg.
    pub h: DMatrix<f64>,
    /// Steps completed.
    pub k: usize,
    pub breakdown: bool,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Runs `k` Arnoldi steps from `v` with modified Gram-Schmidt and one conditional
/// re-orthogonalization pass.
pub fn arnoldi<A: LinearOperator<f64> + ?Sized>(a: &A, v: &[f64], k: usize, breakdown_abs: f64) -> Result<Arnoldi> {
    let n = a.dim();
    if v.len() != n {
        return Err(invalid("start vector length differs from operator size"));
    }
    let beta = norm2(v);
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(invalid("start vector must be nonzero and finite"));
    }
    let k = k.min(n).max(1);
    let mut basis = Vec::with_capacity(k + 1);
    basis.push(v.iter().map(|x| x / beta).collect::<Vec<_>>());
    let mut h = DMatrix::zeros(k + 1, k);
    let mut p = vec![0.0; n];
    for j in 0..k {
        a.apply(&basis[j], &mut p);
        let before = norm2(&p);
        for (i, q) in basis.iter().enumerate() {
            let c = dot(q, &p);
            h[(i, j)] += c;
            axpy(-c, q, &mut p);
        }
        let mut s = norm2(&p);
        if s < 0.7 * before {
            for (i, q) in basis.iter().enumerate() {
                let c = dot(q, &p);
                h[(i, j)] += c;
                axpy(-c, q, &mut p);
            }
            s = norm2(&p);
        }
        if s <= breakdown_abs {
            return Ok(Arnoldi {
                basis,
                h: h.view((0, 0), (j + 2, j + 1)).into_owned(),
                k: j + 1,
                breakdown: true,
            });
        }
        h[(j + 1, j)] = s;
        basis.push(p.iter().map(|x| x / s).collect());
    }
    Ok(Arnoldi {
        basis,
        h,
        k,
        breakdown: false,
    })
}

fn round_2_digits(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return x;
    }
    let s = 10f64.powf(x.log10().floor() - 1.0);
    (x / s).ceil() * s
}

/// `exp(t A) v0`.
pub fn krylov_expm_action<A: LinearOperator<f64> + ?Sized>(
    a: &A,
    t: f64,
    v0: &[f64],
    cfg: &KrylovConfig,
) -> Result<KrylovOutcome> {
    let n = a.dim();
    if v0.len() != n {
        return Err(invalid("state length differs from operator size"));
    }
    let beta0 = norm2(v0);
    if !(beta0 > 0.0) {
        return Err(invalid("initial state must be nonzero"));
    }
    if !beta0.is_finite() || !t.is_finite() {
        return Err(invalid("non-finite input"));
    }
    if cfg.dim == 0 {
        return Err(invalid("Krylov dimension must be at least 1"));
    }
    let anorm = a.norm1();
    if anorm == 0.0 || t == 0.0 {
        return Ok(KrylovOutcome {
            vector: v0.to_vec(),
            steps: 0,
            rejected: 0,
            matvecs: 0,
            error_estimate: 0.0,
            last_dim: 0,
        });
    }
    let mut m = cfg.dim;
    if m > n {
        log::warn!("Krylov dimension {m} exceeds problem size {n}; clamped");
        m = n;
    }
    let tol = cfg.tol * beta0;
    let btol = cfg.breakdown_tol * anorm;
    let (gamma, delta) = (0.9, 1.2);
    let sgn = t.signum();
    let t_out = t.abs();
    let mut t_now = 0.0;
    let mut w = v0.to_vec();
    let mut beta = beta0;
    let mut xm = 1.0 / m as f64;
    let mf = m as f64;
    let fact = ((mf + 1.0) / std::f64::consts::E).powf(mf + 1.0) * (2.0 * std::f64::consts::PI * (mf + 1.0)).sqrt();
    let mut t_new = match cfg.mode {
        KrylovMode::Single => t_out,
        KrylovMode::Adaptive => {
            round_2_digits((1.0 / anorm) * ((fact * tol) / (4.0 * beta * anorm)).powf(xm)).min(t_out)
        }
    };
    let mut out = KrylovOutcome {
        vector: Vec::new(),
        steps: 0,
        rejected: 0,
        matvecs: 0,
        error_estimate: 0.0,
        last_dim: 0,
    };
    let mut scratch = vec![0.0; n];
    while t_now < t_out {
        if out.steps >= cfg.max_steps {
            return Err(Error::KrylovNotConverged {
                estimate: f64::INFINITY,
                tol,
            });
        }
        let mut t_step = (t_out - t_now).min(t_new);
        let arn = arnoldi(a, &w, m, btol)?;
        out.matvecs += arn.k;
        let mb = arn.k;
        // augmented (mb + 2) matrix: H, the h_{m+1,m} link and a unit entry that
        // exposes the phi-function terms of the error expansion
        let k1 = if arn.breakdown { 0 } else { 2 };
        let dim = mb + k1;
        let mut big = DMatrix::zeros(dim.max(mb), dim.max(mb));
        for i in 0..mb {
            for j in 0..mb {
                big[(i, j)] = arn.h[(i, j)];
            }
        }
        let mut avnorm = 0.0;
        if k1 != 0 {
            big[(mb, mb - 1)] = arn.h[(mb, mb - 1)];
            big[(mb + 1, mb)] = 1.0;
            a.apply(&arn.basis[mb], &mut scratch);
            out.matvecs += 1;
            avnorm = norm2(&scratch);
        } else {
            t_step = t_out - t_now;
        }
        let mut tries = 0;
        let (f, err_loc) = loop {
            let f = expm(&(&big * (sgn * t_step)))?;
            if k1 == 0 {
                break (f, btol.min(tol));
            }
            let phi1 = (beta * f[(mb, 0)]).abs();
            let phi2 = (beta * f[(mb + 1, 0)] * avnorm).abs();
            let err = if phi1 > 10.0 * phi2 {
                xm = 1.0 / mf;
                phi2
            } else if phi1 > phi2 {
                xm = 1.0 / mf;
                phi1 * phi2 / (phi1 - phi2)
            } else {
                xm = 1.0 / (mf - 1.0).max(1.0);
                phi1
            };
            if err <= delta * t_step * tol {
                break (f, err);
            }
            if cfg.mode == KrylovMode::Single {
                return Err(Error::KrylovNotConverged {
                    estimate: err / beta0,
                    tol: cfg.tol,
                });
            }
            t_step = round_2_digits(gamma * t_step * (t_step * tol / err).powf(xm));
            tries += 1;
            out.rejected += 1;
            if tries > 50 {
                return Err(Error::KrylovNotConverged {
                    estimate: err / beta0,
                    tol: cfg.tol,
                });
            }
        };
        let used = mb + if k1 > 0 { k1 - 1 } else { 0 };
        let used = used.min(arn.basis.len());
        let mut next = vec![0.0; n];
        for (i, q) in arn.basis.iter().take(used).enumerate() {
            axpy(beta * f[(i, 0)], q, &mut next);
        }
        w = next;
        beta = norm2(&w);
        if !beta.is_finite() {
            return Err(Error::Unstable {
                tau: t_now,
                growth: f64::INFINITY,
            });
        }
        t_now += t_step;
        out.steps += 1;
        out.last_dim = mb;
        out.error_estimate += err_loc.max(f64::EPSILON * anorm * beta);
        t_new = if err_loc > 0.0 {
            round_2_digits(gamma * t_step * (t_step * tol / err_loc).powf(xm))
        } else {
            t_out
        };
        if beta == 0.0 {
            break;
        }
    }
    out.vector = w;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::CsrMatrix;
    use rand::{Rng, SeedableRng};

    fn dense_action(a: &CsrMatrix<f64>, t: f64, v: &[f64]) -> Vec<f64> {
        let n = a.nrows();
        let d = DMatrix::from_fn(n, n, |i, j| a.get(i, j) * t);
        let e = d.exp();
        let x = nalgebra::DVector::from_column_slice(v);
        (e * x).iter().copied().collect()
    }

    fn random_stable(n: usize, seed: u64) -> CsrMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, -3.0 - rng.gen::<f64>())];
                for _ in 0..4 {
                    r.push((rng.gen_range(0..n), rng.gen::<f64>() - 0.5));
                }
                r
            })
            .collect();
        CsrMatrix::from_rows(n, rows).unwrap()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        norm2(&d) / norm2(b)
    }

    #[test]
    fn zero_operator_returns_input() {
        let a = CsrMatrix::<f64>::zeros(5, 5);
        let v = vec![1.0, -2.0, 3.0, 0.5, 0.0];
        let out = krylov_expm_action(&a, 1.0, &v, &KrylovConfig::default()).unwrap();
        assert_eq!(out.vector, v);
    }

    #[test]
    fn rejects_zero_vector() {
        let a = CsrMatrix::<f64>::identity(3);
        assert!(krylov_expm_action(&a, 1.0, &[0.0; 3], &KrylovConfig::default()).is_err());
    }

    #[test]
    fn diagonal_full_dimension() {
        let d: Vec<f64> = (0..20).map(|i| -(i as f64) * 0.7 + 0.3).collect();
        let a = CsrMatrix::from_diagonal(&d);
        let v: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let cfg = KrylovConfig { dim: 20, mode: KrylovMode::Single, tol: 1e-10, ..Default::default() };
        let out = krylov_expm_action(&a, 1.0, &v, &cfg).unwrap();
        for i in 0..20 {
            assert!((out.vector[i] - d[i].exp() * v[i]).abs() < 1e-10 * v[i].max(1.0));
        }
    }

    #[test]
    fn random_sparse_matches_dense() {
        let a = random_stable(50, 11);
        let v: Vec<f64> = (0..50).map(|i| (i as f64).cos()).collect();
        let cfg = KrylovConfig { dim: 30, tol: 1e-10, ..Default::default() };
        let out = krylov_expm_action(&a, 1.0, &v, &cfg).unwrap();
        let exact = dense_action(&a, 1.0, &v);
        assert!(rel_err(&out.vector, &exact) < 1e-8);
    }

    #[test]
    fn stiff_horizon_uses_substeps() {
        let d: Vec<f64> = (0..200).map(|i| -(i as f64).powi(2)).collect();
        let a = CsrMatrix::from_diagonal(&d);
        let v = vec![1.0; 200];
        let cfg = KrylovConfig { dim: 20, tol: 1e-9, ..Default::default() };
        let out = krylov_expm_action(&a, 1.0, &v, &cfg).unwrap();
        assert!(out.steps > 1);
        for i in 0..200 {
            assert!((out.vector[i] - d[i].exp()).abs() < 1e-8);
        }
        let single = KrylovConfig { dim: 20, tol: 1e-9, mode: KrylovMode::Single, ..Default::default() };
        assert!(matches!(
            krylov_expm_action(&a, 1.0, &v, &single),
            Err(Error::KrylovNotConverged { .. })
        ));
    }

    #[test]
    fn arnoldi_basis_is_orthonormal() {
        let a = random_stable(80, 5);
        let v: Vec<f64> = (0..80).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let arn = arnoldi(&a, &v, 50, 1e-14).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..arn.basis.len() {
            for j in 0..arn.basis.len() {
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(&arn.basis[i], &arn.basis[j]) - e).abs());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn error_decreases_with_dimension() {
        let a = random_stable(50, 23);
        let v: Vec<f64> = (0..50).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let exact = dense_action(&a, 1.0, &v);
        let mut prev = f64::INFINITY;
        for y in [2, 4, 6, 8, 10, 12] {
            let cfg = KrylovConfig { dim: y, tol: 1.0, mode: KrylovMode::Single, ..Default::default() };
            let out = krylov_expm_action(&a, 1.0, &v, &cfg).unwrap();
            let e = rel_err(&out.vector, &exact);
            assert!(e <= 1.1 * prev, "Y={y}: {e} vs {prev}");
            prev = e;
        }
    }
}
