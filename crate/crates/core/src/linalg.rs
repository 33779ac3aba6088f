//! Thin wrappers over faer for the handful of factorizations used here.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt as SparseLlt;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, MatRef, Side};

use crate::error::{MortarError, Result};

pub type Sparse = SparseColMat<usize, f64>;

/// Triplet accumulator for a square matrix; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    n: usize,
    entries: Vec<Triplet<usize, usize, f64>>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Triplets { n, entries: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push(Triplet::new(i, j, v));
    }

    pub fn build(&self) -> Sparse {
        SparseColMat::try_new_from_triplets(self.n, self.n, &self.entries).expect("triplet indices in range")
    }
}

/// y = A x for a column-major sparse matrix.
pub fn spmv(a: &Sparse, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    let v = a.val();
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        for k in cp[j]..cp[j + 1] {
            y[ri[k]] += v[k] * xj;
        }
    }
    y
}

/// Diagonal of a sparse matrix.
pub fn diagonal(a: &Sparse) -> Vec<f64> {
    let mut d = vec![0.0; a.nrows()];
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    for j in 0..a.ncols() {
        for k in cp[j]..cp[j + 1] {
            if ri[k] == j {
                d[j] += a.val()[k];
            }
        }
    }
    d
}

/// Sparse Cholesky factorization of an SPD matrix.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    llt: SparseLlt<usize, f64>,
}

impl SparseCholesky {
    pub fn new(a: &Sparse) -> Result<Self> {
        let llt = a.sp_cholesky(Side::Lower).map_err(|e| MortarError::Factorization(format!("{e:?}")))?;
        Ok(SparseCholesky { n: a.nrows(), llt })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut m = Mat::from_fn(self.n, 1, |i, _| b[i]);
        self.llt.solve_in_place(m.as_mut());
        (0..self.n).map(|i| m[(i, 0)]).collect()
    }

    pub fn solve_mat(&self, mut b: Mat<f64>) -> Mat<f64> {
        self.llt.solve_in_place(b.as_mut());
        b
    }
}

/// Solver for a dense symmetric positive (semi)definite matrix: Cholesky
/// when well posed, otherwise the minimum-norm pseudo-inverse.
#[derive(Debug, Clone)]
pub enum SymmetricSolver {
    Cholesky(faer::linalg::solvers::Llt<f64>),
    PseudoInverse(Mat<f64>),
}

/// Relative pivot size below which a matrix is treated as singular.
const PIVOT_TOL: f64 = 1e-12;

impl SymmetricSolver {
    pub fn new(a: MatRef<'_, f64>) -> Self {
        let n = a.nrows();
        let dmax = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        if let Ok(llt) = a.llt(Side::Lower) {
            let l = llt.L();
            let ok = (0..n).all(|i| l[(i, i)] * l[(i, i)] > PIVOT_TOL * dmax);
            if ok {
                return SymmetricSolver::Cholesky(llt);
            }
        }
        SymmetricSolver::PseudoInverse(pseudo_inverse(a))
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, SymmetricSolver::PseudoInverse(_))
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        match self {
            SymmetricSolver::Cholesky(llt) => {
                let mut m = Mat::from_fn(n, 1, |i, _| b[i]);
                llt.solve_in_place(m.as_mut());
                (0..n).map(|i| m[(i, 0)]).collect()
            }
            SymmetricSolver::PseudoInverse(p) => (0..n).map(|i| (0..n).map(|j| p[(i, j)] * b[j]).sum()).collect(),
        }
    }
}

/// Minimum-norm pseudo-inverse of a symmetric matrix via its eigendecomposition.
pub fn pseudo_inverse(a: MatRef<'_, f64>) -> Mat<f64> {
    let n = a.nrows();
    let evd = a.self_adjoint_eigen(Side::Lower).expect("symmetric eigendecomposition");
    let s = evd.S();
    let u = evd.U();
    let smax = (0..n).map(|i| s[i].abs()).fold(0.0, f64::max);
    let mut out = Mat::<f64>::zeros(n, n);
    for k in 0..n {
        if s[k].abs() <= PIVOT_TOL * smax {
            continue;
        }
        let inv = 1.0 / s[k];
        for j in 0..n {
            let w = u[(j, k)] * inv;
            for i in 0..n {
                out[(i, j)] += u[(i, k)] * w;
            }
        }
    }
    out
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Dense symmetric matrix-vector product.
pub fn matvec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj != 0.0 {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi += a[(i, j)] * xj;
            }
        }
    }
    y
}
