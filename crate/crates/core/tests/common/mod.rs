#![allow(dead_code)]

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use mortar_core::{build_grids, GridHierarchy};

pub fn grid2(coarse: [usize; 2], n: [usize; 2]) -> GridHierarchy {
    build_grids(&[1.0, 1.0], &coarse, &n).unwrap()
}

/// +1 density in the first cell, −1 density in the last.
pub fn corner_source(g: &GridHierarchy) -> Vec<f64> {
    let mut q = vec![0.0; g.num_cells()];
    q[0] = g.cell_volume();
    *q.last_mut().unwrap() = -g.cell_volume();
    q
}

pub fn dense_solve(a: &Mat<f64>, b: &[f64]) -> Vec<f64> {
    let rhs = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    let x = a.partial_piv_lu().solve(&rhs);
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

pub fn eigen(a: &Mat<f64>) -> (Vec<f64>, Mat<f64>) {
    let evd = a.self_adjoint_eigen(Side::Lower).unwrap();
    let n = a.nrows();
    ((0..n).map(|i| evd.S()[i]).collect(), evd.U().to_owned())
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    d / n.max(f64::MIN_POSITIVE)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn harmonic(a: f64, b: f64) -> f64 {
    a * b / (a + b)
}
