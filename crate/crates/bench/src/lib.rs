//! Fixtures shared by the kernel benchmarks.

use std::f64::consts::PI;

use fracflow_core::dynamics::{Equation, SimParams};
use fracflow_core::field::make_perturbation_with_seminorm;
use fracflow_core::SphereField;
use fracflow_core::SpectralGrid;

/// Small-data map on an `n`-dimensional box of side `16 pi` with `nodes`
/// points per axis.
pub fn small_map(n: usize, nodes: usize) -> SphereField {
    let grid = SpectralGrid::cubic(n, nodes, 16.0 * PI).expect("valid grid");
    make_perturbation_with_seminorm(&grid, &[0.0, 0.0, 1.0], 0.1, 4, 1)
        .expect("valid perturbation")
        .field
}

/// Regularized flow parameters with the default step.
pub fn llgr_params(n: usize) -> SimParams {
    SimParams::new(Equation::Llgr, n)
}
