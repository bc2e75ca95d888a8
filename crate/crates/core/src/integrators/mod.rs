//! Time integration of the semi-discrete system and spectral diagnostics.

pub mod expm;
pub mod krylov;
pub mod midpoint;
pub mod spectral;

pub use expm::expm;
pub use krylov::{arnoldi, krylov_expm_action, KrylovConfig, KrylovMode, KrylovOutcome};
pub use midpoint::{modified_midpoint_solve, MidpointConfig, MidpointOutcome, TimeOperator};
pub use spectral::{estimate_lambda_max, SpectralOptions, SpectralReport};
