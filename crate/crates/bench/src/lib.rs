//! Input builders for the kernel benchmarks.

use qss_core::solver::initial_seed;
use qss_core::{Grid, Pair, Params, SolverConfig};

pub fn reference_params() -> Params {
    Params::new(3, 2.0, 2.0, 1.0).expect("valid exponents")
}

/// The angular seed of the reference configuration on an `n`-point grid.
pub fn seed(n: usize) -> (Grid, Pair) {
    let grid = Grid::new(3, 8.0, n).expect("odd n");
    let pair = initial_seed(&SolverConfig::default(), &grid, &reference_params()).expect("seed couples");
    (grid, pair)
}
