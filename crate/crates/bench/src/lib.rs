//! Fixtures shared by the benchmarks.

use mortar_core::{build_grids, corner_sources, perm, GridHierarchy, PermField};

/// Channel field on `coarse`² blocks of `n`² cells, η = 1e4, with the
/// corner source pair.
pub fn channel_problem(coarse: usize, n: usize) -> (GridHierarchy, PermField, Vec<f64>) {
    let g = build_grids(&[1.0, 1.0], &[coarse, coarse], &[n, n]).expect("valid grid");
    let k = perm::model1_like(&g, 1, 1e4).expect("valid field");
    let q = corner_sources(&g, 4.0);
    (g, k, q)
}

/// Log-uniform field on a 100×100 domain for the five-spot runs.
pub fn five_spot_problem(coarse: usize, n: usize) -> (GridHierarchy, PermField) {
    let g = build_grids(&[100.0, 100.0], &[coarse, coarse], &[n, n]).expect("valid grid");
    let k = perm::log_uniform(&g, 1.0, 1e4, 1).and_then(|k| k.with_porosity(0.2)).expect("valid field");
    (g, k)
}
