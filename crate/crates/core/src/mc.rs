//! Monte Carlo reference prices under the domestic measure.
//!
//! Full-truncation Euler on `(log s, v, r_d, r_f)`, correlated increments from the
//! Cholesky factor of the correlation matrix, discounting by the trapezoidal
//! integral of `r_d`. Paths are split into fixed batches, each with its own
//! ChaCha stream, and batch sums are combined by a fixed pairwise tree, so the
//! estimate does not depend on the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::model::{ModelParams, OptionKind, OptionSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    /// Pair every path with its mirrored normals; the pair mean is one sample.
    pub antithetic: bool,
    pub batch_size: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 200_000,
            steps_per_year: 200,
            seed: 20_240_917,
            antithetic: false,
            batch_size: 4096,
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.paths == 0 || self.steps_per_year == 0 || self.batch_size == 0 {
            return Err(invalid("paths, steps_per_year and batch_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
}

impl McEstimate {
    /// `|mean - x| <= k * std_error`.
    pub fn within(&self, x: f64, k: f64) -> bool {
        (self.mean - x).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult {
    pub price: McEstimate,
    pub delta: McEstimate,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    sum: [f64; 2],
    sumsq: [f64; 2],
}

impl Moments {
    fn push(&mut self, x: [f64; 2]) {
        self.n += 1;
        for k in 0..2 {
            self.sum[k] += x[k];
            self.sumsq[k] += x[k] * x[k];
        }
    }

    fn merge(a: Self, b: Self) -> Self {
        Self {
            n: a.n + b.n,
            sum: [a.sum[0] + b.sum[0], a.sum[1] + b.sum[1]],
            sumsq: [a.sumsq[0] + b.sumsq[0], a.sumsq[1] + b.sumsq[1]],
        }
    }

    fn estimate(&self, k: usize, paths: usize) -> McEstimate {
        let n = self.n as f64;
        let mean = self.sum[k] / n;
        let var = if self.n > 1 {
            ((self.sumsq[k] - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        McEstimate {
            mean,
            std_error: (var / n).sqrt(),
            paths,
        }
    }
}

fn pairwise(mut v: Vec<Moments>) -> Moments {
    while v.len() > 1 {
        v = v
            .chunks(2)
            .map(|c| if c.len() == 2 { Moments::merge(c[0], c[1]) } else { c[0] })
            .collect();
    }
    v.pop().unwrap_or_default()
}

struct Path<'a> {
    model: &'a ModelParams,
    option: &'a OptionSpec,
    chol: [[f64; 4]; 4],
    steps: usize,
    dt: f64,
}

impl Path<'_> {
    /// Discounted payoff and pathwise delta for one set of normals.
    fn run(&self, normals: &[[f64; 4]], sign: f64) -> [f64; 2] {
        let p = self.model;
        let t_end = self.option.maturity;
        let sq = self.dt.sqrt();
        let (mut x, mut v, mut rd, mut rf) = (p.s0.ln(), p.v0, p.rd0, p.rf0);
        let mut integral = 0.0;
        let rho_sf = p.correlation.get(0, 3);
        for (n, z) in normals.iter().take(self.steps).enumerate() {
            // the PDE's levels are functions of time to maturity
            let tau = t_end - n as f64 * self.dt;
            let mut w = [0.0; 4];
            for i in 0..4 {
                for k in 0..=i {
                    w[i] += self.chol[i][k] * z[k] * sign;
                }
            }
            let vp = v.max(0.0);
            let sv = vp.sqrt();
            let rd_old = rd;
            x += (rd - rf - 0.5 * vp) * self.dt + sv * sq * w[0];
            v += p.kappa * (p.vbar - vp) * self.dt + p.gamma * sv * sq * w[1];
            rd += p.lambda_d * (p.theta_d(tau) - rd) * self.dt + p.eta_d * sq * w[2];
            rf += (p.lambda_f * (p.theta_f(tau) - rf) - p.eta_f * rho_sf * sv) * self.dt + p.eta_f * sq * w[3];
            integral += 0.5 * (rd_old + rd) * self.dt;
        }
        let s = x.exp();
        let disc = (-integral).exp();
        let e = self.option.strike;
        let delta = match self.option.kind {
            OptionKind::Call if s > e => s / p.s0,
            OptionKind::Put if s < e => -s / p.s0,
            _ => 0.0,
        };
        [disc * self.option.payoff(s), disc * delta]
    }
}

/// Price and pathwise delta in one pass.
pub fn simulate(model: &ModelParams, option: &OptionSpec, cfg: &McConfig) -> Result<McResult> {
    model.validate()?;
    cfg.validate()?;
    let steps = ((cfg.steps_per_year as f64 * option.maturity).round() as usize).max(1);
    let path = Path {
        model,
        option,
        chol: model.correlation.cholesky(),
        steps,
        dt: option.maturity / steps as f64,
    };
    let batches = cfg.paths.div_ceil(cfg.batch_size);
    let parts: Vec<Moments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64);
            let count = cfg.batch_size.min(cfg.paths - b * cfg.batch_size);
            let mut normals = vec![[0.0; 4]; steps];
            let mut m = Moments::default();
            for _ in 0..count {
                for z in normals.iter_mut() {
                    for x in z.iter_mut() {
                        *x = StandardNormal.sample(&mut rng);
                    }
                }
                let a = path.run(&normals, 1.0);
                if cfg.antithetic {
                    let b = path.run(&normals, -1.0);
                    m.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                } else {
                    m.push(a);
                }
            }
            m
        })
        .collect();
    let total = pairwise(parts);
    Ok(McResult {
        price: total.estimate(0, cfg.paths),
        delta: total.estimate(1, cfg.paths),
        steps,
    })
}

pub fn simulate_price(model: &ModelParams, option: &OptionSpec, cfg: &McConfig) -> Result<McEstimate> {
    Ok(simulate(model, option, cfg)?.price)
}

/// `E[1{s_T > E} s_T / s0 * discount]` for a call, the mirrored estimator for a put.
pub fn pathwise_delta(model: &ModelParams, option: &OptionSpec, cfg: &McConfig) -> Result<McEstimate> {
    Ok(simulate(model, option, cfg)?.delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{reference_params, CorrelationMatrix};
    use approx::assert_relative_eq;

    fn small(paths: usize) -> McConfig {
        McConfig {
            paths,
            steps_per_year: 50,
            batch_size: 512,
            ..McConfig::default()
        }
    }

    fn deterministic() -> ModelParams {
        ModelParams {
            v0: 0.0,
            vbar: 0.0,
            gamma: 0.0,
            eta_d: 0.0,
            eta_f: 0.0,
            rd0: 0.05,
            rf0: 0.02,
            lambda_d: 0.0,
            lambda_f: 0.0,
            correlation: CorrelationMatrix::identity(),
            ..reference_params()
        }
    }

    #[test]
    fn deterministic_limit() {
        let p = deterministic();
        let opt = OptionSpec::new(OptionKind::Call, 100.0, 1.0).unwrap();
        let r = simulate(&p, &opt, &small(100)).unwrap();
        let st = 100.0 * (0.03f64).exp();
        let disc = (-0.05f64).exp();
        assert_relative_eq!(r.price.mean, disc * (st - 100.0), max_relative = 1e-12);
        assert!(r.price.std_error < 1e-10);
        assert_relative_eq!(r.delta.mean, disc * st / 100.0, max_relative = 1e-12);
    }

    #[test]
    fn deep_out_of_the_money_delta_vanishes() {
        let p = ModelParams { s0: 10.0, ..reference_params() };
        let opt = OptionSpec::new(OptionKind::Call, 100.0, 1.0).unwrap();
        let r = simulate(&p, &opt, &small(4000)).unwrap();
        assert!(r.delta.within(0.0, 3.0) || r.delta.mean.abs() < 1e-12);
    }

    #[test]
    fn martingale_with_zero_rates() {
        let p = ModelParams {
            rd0: 0.0,
            rf0: 0.0,
            lambda_d: 0.0,
            lambda_f: 0.0,
            eta_d: 0.0,
            eta_f: 0.0,
            correlation: CorrelationMatrix::identity(),
            ..reference_params()
        };
        // a vanishing strike turns the call into the forward
        let opt = OptionSpec::new(OptionKind::Call, 1e-9, 1.0).unwrap();
        let r = simulate_price(&p, &opt, &small(20_000)).unwrap();
        assert!(r.within(100.0 - 1e-9, 3.0), "{r:?}");
    }

    #[test]
    fn reproducible_and_batch_order_free() {
        let p = reference_params();
        let opt = OptionSpec::new(OptionKind::Call, 100.0, 1.0).unwrap();
        let a = simulate(&p, &opt, &small(3000)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| simulate(&p, &opt, &small(3000)).unwrap());
        assert_eq!(a, b);
        let c = simulate(&p, &opt, &McConfig { seed: 7, ..small(3000) }).unwrap();
        assert_ne!(a.price.mean, c.price.mean);
    }

    #[test]
    fn standard_error_scales_with_paths() {
        let p = reference_params();
        let opt = OptionSpec::new(OptionKind::Call, 100.0, 1.0).unwrap();
        let ladder = [1000usize, 4000, 16000];
        let se: Vec<f64> = ladder
            .iter()
            .map(|&n| simulate_price(&p, &opt, &small(n)).unwrap().std_error)
            .collect();
        let slope = (se[2] / se[0]).ln() / (16.0f64).ln();
        assert!((slope + 0.5).abs() < 0.1, "{slope}");
    }

    #[test]
    fn antithetic_reduces_variance() {
        let p = reference_params();
        let opt = OptionSpec::new(OptionKind::Call, 100.0, 1.0).unwrap();
        let plain = simulate_price(&p, &opt, &small(4000)).unwrap();
        let anti = simulate_price(&p, &opt, &McConfig { antithetic: true, ..small(4000) }).unwrap();
        assert!(anti.std_error < plain.std_error);
        assert!((anti.mean - plain.mean).abs() < 3.0 * plain.std_error);
    }

    #[test]
    fn bad_config() {
        let p = reference_params();
        let opt = OptionSpec::new(OptionKind::Call, 100.0, 1.0).unwrap();
        assert!(simulate(&p, &opt, &McConfig { paths: 0, ..small(1) }).is_err());
        assert!(simulate(&p, &opt, &McConfig { steps_per_year: 0, ..small(1) }).is_err());
    }
}
