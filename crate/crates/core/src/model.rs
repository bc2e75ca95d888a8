//! FX Heston with Hull-White domestic and foreign short rates.

use nalgebra::{Matrix4, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Smallest eigenvalue tolerated in a correlation matrix.
const PSD_TOL: f64 = -1e-10;

/// Mean-reversion level `p1 - p2 exp(-p3 tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl ThetaParams {
    pub fn constant(level: f64) -> Self {
        Self {
            p1: level,
            p2: 0.0,
            p3: 0.0,
        }
    }

    pub fn eval<T: Scalar>(&self, tau: T) -> T {
        T::lit(self.p1) - T::lit(self.p2) * (-T::lit(self.p3) * tau).exp()
    }

    /// Level frozen at `tau = 1`.
    pub fn constant_approx(&self) -> f64 {
        self.eval(1.0)
    }

    pub fn is_constant(&self) -> bool {
        self.p2 == 0.0 || self.p3 == 0.0
    }
}

/// Symmetric 4x4 correlation in the order `(s, v, r_d, r_f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationMatrix {
    m: [[f64; 4]; 4],
}

/// The six off-diagonal correlations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Correlations {
    pub sv: f64,
    pub sd: f64,
    pub sf: f64,
    pub vd: f64,
    pub vf: f64,
    pub df: f64,
}

impl CorrelationMatrix {
    pub fn identity() -> Self {
        Self::from_pairs(&Correlations::default()).expect("identity is a correlation matrix")
    }

    pub fn from_pairs(c: &Correlations) -> Result<Self> {
        Self::new([
            [1.0, c.sv, c.sd, c.sf],
            [c.sv, 1.0, c.vd, c.vf],
            [c.sd, c.vd, 1.0, c.df],
            [c.sf, c.vf, c.df, 1.0],
        ])
    }

    pub fn new(m: [[f64; 4]; 4]) -> Result<Self> {
        validate_correlation(&m)?;
        Ok(Self { m })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i][j]
    }

    pub fn entries(&self) -> &[[f64; 4]; 4] {
        &self.m
    }

    pub fn pairs(&self) -> Correlations {
        let m = &self.m;
        Correlations {
            sv: m[0][1],
            sd: m[0][2],
            sf: m[0][3],
            vd: m[1][2],
            vf: m[1][3],
            df: m[2][3],
        }
    }

    /// Lower Cholesky factor, with zero pivots tolerated for singular PSD input.
    pub fn cholesky(&self) -> [[f64; 4]; 4] {
        let mut l = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..=i {
                let mut s = self.m[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    l[i][i] = s.max(0.0).sqrt();
                } else if l[j][j] > 1e-14 {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        l
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.m)
    }
}

fn min_eigenvalue(m: &[[f64; 4]; 4]) -> f64 {
    let mat = Matrix4::from_fn(|i, j| m[i][j]);
    SymmetricEigen::new(mat).eigenvalues.min()
}

/// Checks symmetry, unit diagonal, entry range and positive semidefiniteness.
pub fn validate_correlation(m: &[[f64; 4]; 4]) -> Result<()> {
    for i in 0..4 {
        if m[i][i] != 1.0 {
            return Err(Error::ModelConfig(format!("diagonal entry ({i},{i}) is {}, expected 1", m[i][i])));
        }
        for j in 0..4 {
            let x = m[i][j];
            if !x.is_finite() || !(-1.0..=1.0).contains(&x) {
                return Err(Error::ModelConfig(format!("correlation ({i},{j}) = {x} outside [-1, 1]")));
            }
            if (x - m[j][i]).abs() > 1e-14 {
                return Err(Error::ModelConfig(format!("correlation matrix not symmetric at ({i},{j})")));
            }
        }
    }
    let lmin = min_eigenvalue(m);
    if lmin < PSD_TOL {
        return Err(Error::ModelConfig(format!(
            "correlation matrix not positive semidefinite: smallest eigenvalue {lmin:.3e}"
        )));
    }
    Ok(())
}

/// Model parameters. `s0` is only used by the Monte Carlo oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub s0: f64,
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
    pub correlation: CorrelationMatrix,
}

impl ModelParams {
    /// Reports every violation found, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        for (name, x) in [("kappa", self.kappa), ("s0", self.s0)] {
            if !(x > 0.0) || !x.is_finite() {
                problems.push(format!("{name} must be positive, got {x}"));
            }
        }
        // zero vol-of-vol is allowed: it gives the deterministic limit
        let nonneg = [
            ("gamma", self.gamma),
            ("eta_d", self.eta_d),
            ("eta_f", self.eta_f),
            ("vbar", self.vbar),
            ("v0", self.v0),
            ("lambda_d", self.lambda_d),
            ("lambda_f", self.lambda_f),
        ];
        for (name, x) in nonneg {
            if !(x >= 0.0) || !x.is_finite() {
                problems.push(format!("{name} must be non-negative, got {x}"));
            }
        }
        for (name, x) in [("rd0", self.rd0), ("rf0", self.rf0)] {
            if !x.is_finite() {
                problems.push(format!("{name} must be finite, got {x}"));
            }
        }
        if let Err(Error::ModelConfig(msg)) = validate_correlation(self.correlation.entries()) {
            problems.push(msg);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::ModelConfig(problems.join("; ")))
        }
    }

    pub fn theta_d<T: Scalar>(&self, tau: T) -> T {
        self.theta_d.eval(tau)
    }

    pub fn theta_f<T: Scalar>(&self, tau: T) -> T {
        self.theta_f.eval(tau)
    }

    /// `(theta_d*, theta_f*)`, the levels frozen at `tau = 1`.
    pub fn theta_constant_approx(&self) -> (f64, f64) {
        (self.theta_d.constant_approx(), self.theta_f.constant_approx())
    }

    /// Copy with both levels replaced by their frozen values.
    pub fn with_constant_theta(&self) -> Self {
        let (d, f) = self.theta_constant_approx();
        Self {
            theta_d: ThetaParams::constant(d),
            theta_f: ThetaParams::constant(f),
            ..self.clone()
        }
    }

    pub fn has_constant_theta(&self) -> bool {
        self.theta_d.is_constant() && self.theta_f.is_constant()
    }

    pub fn feller(&self) -> FellerCheck {
        feller_check(self.kappa, self.vbar, self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FellerCheck {
    /// `2 kappa vbar / gamma^2`.
    pub ratio: f64,
    pub satisfied: bool,
}

pub fn feller_check(kappa: f64, vbar: f64, gamma: f64) -> FellerCheck {
    let ratio = 2.0 * kappa * vbar / (gamma * gamma);
    FellerCheck {
        ratio,
        satisfied: ratio > 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub kind: OptionKind,
    pub strike: f64,
    pub maturity: f64,
}

impl OptionSpec {
    pub fn new(kind: OptionKind, strike: f64, maturity: f64) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::ModelConfig(format!("strike must be positive, got {strike}")));
        }
        if !(maturity > 0.0) || !maturity.is_finite() {
            return Err(Error::ModelConfig(format!("maturity must be positive, got {maturity}")));
        }
        Ok(Self {
            kind,
            strike,
            maturity,
        })
    }

    pub fn payoff<T: Scalar>(&self, s: T) -> T {
        payoff(self, s)
    }
}

pub fn payoff<T: Scalar>(spec: &OptionSpec, s: T) -> T {
    let e = T::lit(spec.strike);
    match spec.kind {
        OptionKind::Call => (s - e).max(T::zero()),
        OptionKind::Put => (e - s).max(T::zero()),
    }
}

/// Whether mean-reversion levels are evaluated in time or frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaMode {
    #[default]
    TimeDependent,
    Constant,
}

/// Parameter set of the constant-level call and put experiments.
pub fn reference_params() -> ModelParams {
    ModelParams {
        s0: 100.0,
        v0: 0.04,
        rd0: 0.1,
        rf0: 0.1,
        kappa: 0.5,
        vbar: 0.1,
        gamma: 0.3,
        lambda_d: 0.01,
        lambda_f: 0.05,
        eta_d: 0.007,
        eta_f: 0.012,
        theta_d: ThetaParams::constant(0.05),
        theta_f: ThetaParams::constant(0.05),
        correlation: CorrelationMatrix::from_pairs(&reference_correlations())
            .expect("reference correlation is valid"),
    }
}

pub fn reference_correlations() -> Correlations {
    Correlations {
        sv: -0.4,
        sd: -0.15,
        sf: -0.15,
        vd: 0.3,
        vf: 0.3,
        df: 0.25,
    }
}

/// Time-dependent level parameters of the third experiment.
pub fn time_dependent_params() -> ModelParams {
    ModelParams {
        theta_d: ThetaParams {
            p1: 0.074,
            p2: 0.014,
            p3: 2.10,
        },
        theta_f: ThetaParams {
            p1: 1.0,
            p2: 0.5,
            p3: 0.5,
        },
        ..reference_params()
    }
}
