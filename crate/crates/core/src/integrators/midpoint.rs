//! Explicit modified midpoint stepping for `V' = A(tau) V`.
//!
//! Each macro step of length `dtau` runs `n` leapfrog substeps of length
//! `dtau / n`, started by one Euler step and closed by the averaging step
//! `V = (Z_n + Z_{n-1} + h A Z_n) / 2`. With `n = steps` and a single macro step
//! this is the plain multistep scheme over the whole horizon.

use crate::error::{invalid, Error, Result};
use crate::integrators::krylov::norm2;
use crate::operator::AffineOperator;
use crate::sparse::{CsrMatrix, LinearOperator};

/// Operator that may depend on backward time.
pub trait TimeOperator: Sync {
    fn dim(&self) -> usize;
    fn apply_at(&self, tau: f64, x: &[f64], y: &mut [f64], scratch: &mut [f64]);
}

impl TimeOperator for AffineOperator<f64> {
    fn dim(&self) -> usize {
        AffineOperator::dim(self)
    }

    fn apply_at(&self, tau: f64, x: &[f64], y: &mut [f64], scratch: &mut [f64]) {
        AffineOperator::apply_at(self, tau, x, y, scratch)
    }
}

impl TimeOperator for CsrMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply_at(&self, _tau: f64, x: &[f64], y: &mut [f64], _scratch: &mut [f64]) {
        self.apply(x, y)
    }
}

/// A closure `(tau, x, y)` acting as a time-dependent operator.
pub struct FnOperator<F> {
    pub n: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> TimeOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_at(&self, tau: f64, x: &[f64], y: &mut [f64], _scratch: &mut [f64]) {
        (self.f)(tau, x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidpointConfig {
    pub delta_tau: f64,
    pub steps: usize,
    /// Leapfrog substeps per macro step.
    pub substeps: usize,
    /// Abort when the state norm exceeds this multiple of the initial norm.
    pub growth_limit: f64,
}

impl MidpointConfig {
    /// `steps` macro steps covering `[0, horizon]`.
    pub fn for_horizon(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) {
            return Err(invalid("midpoint needs a positive horizon and at least one step"));
        }
        Ok(Self {
            delta_tau: horizon / steps as f64,
            steps,
            substeps: 2,
            growth_limit: 1e6,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.delta_tau * self.steps as f64
    }

    fn validate(&self) -> Result<()> {
        if !(self.delta_tau > 0.0) || !self.delta_tau.is_finite() {
            return Err(invalid(format!("delta_tau must be positive, got {}", self.delta_tau)));
        }
        if self.steps == 0 || self.substeps == 0 {
            return Err(invalid("steps and substeps must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MidpointOutcome {
    pub vector: Vec<f64>,
    pub matvecs: usize,
    /// Largest `||Z|| / ||V(0)||` seen.
    pub max_growth: f64,
}

/// Advances `v0` from `tau = 0` to `steps * delta_tau`.
pub fn modified_midpoint_solve<A: TimeOperator + ?Sized>(
    a: &A,
    v0: &[f64],
    cfg: &MidpointConfig,
) -> Result<MidpointOutcome> {
    cfg.validate()?;
    let n = a.dim();
    if v0.len() != n {
        return Err(invalid("state length differs from operator size"));
    }
    let norm0 = norm2(v0).max(f64::MIN_POSITIVE);
    let sub = cfg.substeps;
    let h = cfg.delta_tau / sub as f64;
    let mut v = v0.to_vec();
    let mut z_prev = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut az = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut matvecs = 0;
    let mut max_growth: f64 = 1.0;
    for step in 0..cfg.steps {
        let tau0 = step as f64 * cfg.delta_tau;
        z_prev.copy_from_slice(&v);
        a.apply_at(tau0, &z_prev, &mut az, &mut scratch);
        matvecs += 1;
        for i in 0..n {
            z[i] = z_prev[i] + h * az[i];
        }
        for k in 1..sub {
            a.apply_at(tau0 + k as f64 * h, &z, &mut az, &mut scratch);
            matvecs += 1;
            for i in 0..n {
                let next = z_prev[i] + 2.0 * h * az[i];
                z_prev[i] = z[i];
                z[i] = next;
            }
        }
        let tau1 = tau0 + cfg.delta_tau;
        a.apply_at(tau1, &z, &mut az, &mut scratch);
        matvecs += 1;
        for i in 0..n {
            v[i] = 0.5 * (z[i] + z_prev[i] + h * az[i]);
        }
        let growth = norm2(&v) / norm0;
        max_growth = max_growth.max(growth);
        if !(growth <= cfg.growth_limit) {
            return Err(Error::Unstable { tau: tau1, growth });
        }
    }
    Ok(MidpointOutcome {
        vector: v,
        matvecs,
        max_growth,
    })
}
