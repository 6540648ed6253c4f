//! Observable families and the single-shot estimators built from them.

pub mod cache;
pub mod coefficients;
pub mod finite;
pub mod homodyne;

pub use coefficients::{estimator_coefficients, EstimatorCoefficients};
pub use finite::{build_finite_quorum, expand_in_quorum, FiniteQuorum, Observable};
pub use homodyne::{GridSpec, HomodyneKernel};

/// `build_homodyne_kernel(dim_cut, eta, grid)`: pattern functions for all
/// `n, m < dim_cut`.
pub fn build_homodyne_kernel(dim_cut: usize, eta: f64, grid: GridSpec) -> crate::Result<HomodyneKernel> {
    HomodyneKernel::build(dim_cut, eta, grid)
}
