//! Finite-difference baseline: classical central differences on a uniform grid.
//!
//! The Gaussian weights tend to the classical non-uniform FD weights as the shape
//! parameter grows, so the baseline is the same assembler with every shape
//! parameter infinite and uniform spacing. Mixed terms are then the tensor product
//! of two central first-derivative stencils (the nine-point cross). Boundary rows
//! and ordering are the ones of the main pipeline.

use crate::error::Result;
use crate::grid::{build_grid, GridConfig, GridFocus, Spacing};
use crate::model::{ModelParams, OptionSpec};
use crate::operator::{BoundaryMode, OperatorAssembler, SparseOperator};
use crate::pricer::{Method, PricingConfig};
use crate::rbf_stencil::ShapeParams;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct FdkmConfig {
    pub m: [usize; 4],
    pub s_max_factor: f64,
    pub v_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub boundary: BoundaryMode,
}

impl FdkmConfig {
    /// Uniform grid on the same truncated domain as the main pipeline.
    pub fn new(m: [usize; 4]) -> Self {
        let g = GridConfig::default();
        Self {
            m,
            s_max_factor: g.s_max_factor,
            v_max: g.v_max,
            r_min: g.r_min,
            r_max: g.r_max,
            boundary: BoundaryMode::Dirichlet,
        }
    }

    pub fn grid_config(&self) -> GridConfig {
        GridConfig {
            m: self.m,
            s_max_factor: self.s_max_factor,
            v_max: self.v_max,
            r_min: self.r_min,
            r_max: self.r_max,
            spacing: Spacing::Uniform,
            ..GridConfig::default()
        }
    }

    /// Pricing settings that run the baseline through `price`.
    pub fn pricing_config(&self) -> PricingConfig {
        PricingConfig {
            grid: self.grid_config(),
            method: Method::Fdkm,
            boundary: self.boundary,
            ..PricingConfig::default()
        }
    }
}

pub fn fdkm_assembler<T: Scalar>(
    cfg: &FdkmConfig,
    model: &ModelParams,
    option: &OptionSpec,
) -> Result<OperatorAssembler<T>> {
    model.validate()?;
    let focus = GridFocus {
        strike: option.strike,
        v0: model.v0,
        rd0: model.rd0,
        rf0: model.rf0,
    };
    let grid = build_grid::<T>(&cfg.grid_config(), &focus)?;
    OperatorAssembler::new(grid, model.clone(), *option, cfg.boundary, ShapeParams::infinite())
}

/// The FD operator at backward time `tau`.
pub fn assemble_fdkm_operator<T: Scalar>(
    cfg: &FdkmConfig,
    model: &ModelParams,
    option: &OptionSpec,
    tau: T,
) -> Result<SparseOperator<T>> {
    fdkm_assembler(cfg, model, option)?.assemble(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::AxisKind;
    use crate::model::{reference_params, OptionKind};
    use approx::assert_relative_eq;

    fn call() -> OptionSpec {
        OptionSpec::new(OptionKind::Call, 100.0, 1.0).unwrap()
    }

    #[test]
    fn central_first_derivative_rows() {
        let asm = fdkm_assembler::<f64>(&FdkmConfig::new([10, 8, 6, 6]), &reference_params(), &call()).unwrap();
        for axis in AxisKind::ALL {
            let x = asm.grid().axis(axis).nodes();
            let h = x[1] - x[0];
            let d = asm.first_derivative(axis);
            for i in 1..x.len() - 1 {
                let row = d.row(i);
                assert_relative_eq!(row[0].1, -0.5 / h, max_relative = 1e-10);
                assert!(row[1].1.abs() < 1e-10 / h);
                assert_relative_eq!(row[2].1, 0.5 / h, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn nine_point_cross_is_exact_on_bilinear() {
        // f = s v; the sv term of the operator with its coefficient removed must return 1
        let asm = fdkm_assembler::<f64>(&FdkmConfig::new([10, 8, 6, 6]), &reference_params(), &call()).unwrap();
        let g = asm.grid();
        let [m1, m2, _, _] = g.shape();
        let ds = asm.first_derivative(AxisKind::S);
        let dv = asm.first_derivative(AxisKind::V);
        for j in 1..m2 - 1 {
            for i in 1..m1 - 1 {
                let mut acc = 0.0;
                for &(a, wa) in ds.row(i) {
                    for &(b, wb) in dv.row(j) {
                        acc += wa * wb * g.s()[a] * g.v()[b];
                    }
                }
                assert!((acc - 1.0).abs() < 1e-10, "{acc}");
            }
        }
    }

    #[test]
    fn second_order_on_smooth_functions() {
        let err = |m: usize| {
            let x: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
            let d1 = crate::operator::first_derivative_matrix(AxisKind::S, &x, f64::INFINITY).unwrap();
            let d2 = crate::operator::second_derivative_matrix(AxisKind::S, &x, f64::INFINITY).unwrap();
            let f: Vec<f64> = x.iter().map(|t| t.sin()).collect();
            let (g1, g2) = (d1.apply(&f), d2.apply(&f));
            let mut e = (0.0f64, 0.0f64);
            for i in 2..m - 1 {
                e.0 = e.0.max((g1[i] - x[i].cos()).abs());
                e.1 = e.1.max((g2[i] + x[i].sin()).abs());
            }
            e
        };
        let (a, b) = (err(21), err(41));
        assert!((a.0 / b.0).log2() > 1.8);
        assert!((a.1 / b.1).log2() > 1.8);
    }

    #[test]
    fn same_layout_as_main_pipeline() {
        let op = assemble_fdkm_operator(&FdkmConfig::new([10, 8, 6, 6]), &reference_params(), &call(), 0.0).unwrap();
        assert_eq!(op.metadata.shape, [10, 8, 6, 6]);
        assert_eq!(op.metadata.ordering, AxisKind::ALL);
        assert_eq!(op.metadata.mode, BoundaryMode::Dirichlet);
    }
}
