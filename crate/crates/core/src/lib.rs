//! Pricing of FX options under Heston dynamics with Hull-White domestic and
//! foreign short rates, by Gaussian RBF-FD method of lines.

pub mod error;
pub mod fdkm;
pub mod grid;
pub mod integrators;
pub mod mc;
pub mod model;
pub mod operator;
pub mod pricer;
pub mod rbf_stencil;
pub mod runner;
pub mod scalar;
pub mod sparse;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Grid = grid::Grid4D<f64>;
pub type Operator = operator::SparseOperator<f64>;
pub type Assembler = operator::OperatorAssembler<f64>;
pub type Csr = sparse::CsrMatrix<f64>;
