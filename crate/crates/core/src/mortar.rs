//! Mortar spaces, the interface operator and its coarse solve, solution
//! recovery and error norms.
//!
//! Mortar values are face pressures on the skeleton (fine faces of interior
//! coarse edges). A coarse basis vector lives on one edge and is stored by its
//! values on that edge's fine faces, so every coarse space is a subspace of
//! the full skeleton space.

use faer::Mat;
use rayon::prelude::*;

use crate::error::{MortarError, Result};
use crate::grid::GridHierarchy;
use crate::hybrid::{check_compatible, recenter, BlockState, CellFluxes, FaceFlux, LocalFace, SubdomainSystem};
use crate::linalg::{dot, matvec, norm, spmv, Sparse, SparseCholesky, SymmetricSolver, Triplets};
use crate::perm::PermField;

/// Per-edge basis lists, indexed by skeleton edge position.
#[derive(Debug, Clone, PartialEq)]
pub struct MortarSpace {
    pub edges: Vec<Vec<Vec<f64>>>,
    /// Offline vectors at the front of each list.
    pub offline: Vec<usize>,
}

impl MortarSpace {
    /// One coordinate per skeleton face.
    pub fn full(grid: &GridHierarchy) -> Self {
        let edges: Vec<Vec<Vec<f64>>> = (0..grid.skeleton_edges().len())
            .map(|s| {
                let m = grid.skeleton_range(s).len();
                (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
            })
            .collect();
        let offline = edges.iter().map(Vec::len).collect();
        MortarSpace { edges, offline }
    }

    pub fn dof(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut o = Vec::with_capacity(self.edges.len() + 1);
        o.push(0);
        for e in &self.edges {
            o.push(o.last().unwrap() + e.len());
        }
        o
    }

    pub fn max_basis(&self) -> usize {
        self.edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn online_count(&self, s: usize) -> usize {
        self.edges[s].len() - self.offline[s]
    }

    /// Skeleton vector `P c` from coarse coordinates.
    pub fn prolong(&self, grid: &GridHierarchy, coef: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; grid.num_skeleton_faces()];
        let mut k = 0;
        for (s, basis) in self.edges.iter().enumerate() {
            let r = grid.skeleton_range(s);
            for b in basis {
                for (o, v) in out[r.clone()].iter_mut().zip(b) {
                    *o += coef[k] * v;
                }
                k += 1;
            }
        }
        out
    }

    /// `Pᵀ v` for a skeleton vector.
    pub fn restrict(&self, grid: &GridHierarchy, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dof());
        for (s, basis) in self.edges.iter().enumerate() {
            let seg = &v[grid.skeleton_range(s)];
            out.extend(basis.iter().map(|b| dot(b, seg)));
        }
        out
    }

    /// Least-squares coarse coordinates of the constant multiplier.
    pub fn constant_coords(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dof());
        for basis in &self.edges {
            let nb = basis.len();
            if nb == 0 {
                continue;
            }
            let gram = Mat::from_fn(nb, nb, |i, j| dot(&basis[i], &basis[j]));
            let rhs: Vec<f64> = basis.iter().map(|b| b.iter().sum()).collect();
            out.extend(SymmetricSolver::new(gram.as_ref()).solve(&rhs));
        }
        out
    }
}

fn legendre(m: usize, t: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, t);
    if m == 0 {
        return p0;
    }
    for j in 1..m {
        let p2 = ((2 * j + 1) as f64 * t * p1 - j as f64 * p0) / (j + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Antiderivative of the degree-m Legendre polynomial.
fn legendre_integral(m: usize, t: f64) -> f64 {
    if m == 0 {
        t
    } else {
        (legendre(m + 1, t) - legendre(m - 1, t)) / (2 * m + 1) as f64
    }
}

/// Averages of `P_m` over `cells` equal subintervals of `[-1, 1]`.
pub fn legendre_averages(m: usize, cells: usize) -> Vec<f64> {
    let w = 2.0 / cells as f64;
    (0..cells)
        .map(|j| {
            let a = -1.0 + j as f64 * w;
            (legendre_integral(m, a + w) - legendre_integral(m, a)) / w
        })
        .collect()
}

/// Orthonormalize in the inner product `⟨x, G y⟩` (identity if `g` is None),
/// twice-classical Gram–Schmidt. Vectors whose relative norm drops below
/// `drop_tol` are discarded. `existing` are already orthonormal.
pub fn orthonormalize(existing: &[Vec<f64>], candidates: Vec<Vec<f64>>, g: Option<&Mat<f64>>, drop_tol: f64) -> Vec<Vec<f64>> {
    let ip = |x: &[f64], y: &[f64]| match g {
        Some(g) => dot(x, &matvec(g.as_ref(), y)),
        None => dot(x, y),
    };
    let mut basis: Vec<Vec<f64>> = existing.to_vec();
    let mut kept = Vec::new();
    for mut v in candidates {
        let n0 = ip(&v, &v).max(0.0).sqrt();
        if !(n0 > 0.0) || !n0.is_finite() {
            continue;
        }
        for _ in 0..2 {
            let coeffs: Vec<f64> = basis.iter().map(|b| ip(b, &v)).collect();
            for (b, c) in basis.iter().zip(coeffs) {
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= c * bi;
                }
            }
        }
        let n1 = ip(&v, &v).max(0.0).sqrt();
        if n1 < drop_tol * n0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= n1);
        basis.push(v.clone());
        kept.push(v);
    }
    kept
}

/// Degree pairs in graded order for a two-parameter edge.
fn graded_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut total = 0;
    while out.len() < k {
        for a in (0..=total).rev() {
            out.push((a, total - a));
        }
        total += 1;
    }
    out.truncate(k);
    out
}

/// Legendre polynomials of degree `0..k` per interior edge, as fine-face
/// averages, orthonormalized (tensor products in graded order on 3D faces).
pub fn offline_basis(grid: &GridHierarchy, k: usize) -> Result<MortarSpace> {
    if k == 0 {
        return Err(MortarError::Config("offline basis count must be at least 1".into()));
    }
    let n = grid.n();
    let mut edges = Vec::new();
    for &e in grid.skeleton_edges() {
        let axis = grid.edge(e).axis;
        let trans: Vec<usize> = (0..grid.dim()).filter(|&a| a != axis).collect();
        let cand: Vec<Vec<f64>> = if trans.len() == 1 {
            (0..k).map(|m| legendre_averages(m, n[trans[0]])).collect()
        } else {
            graded_pairs(k)
                .into_iter()
                .map(|(a, b)| {
                    let ua = legendre_averages(a, n[trans[0]]);
                    let ub = legendre_averages(b, n[trans[1]]);
                    // faces are x-fastest over the transverse axes
                    ub.iter().flat_map(|vb| ua.iter().map(move |va| va * vb)).collect()
                })
                .collect()
        };
        edges.push(orthonormalize(&[], cand, None, 1e-10));
    }
    let offline = edges.iter().map(Vec::len).collect();
    Ok(MortarSpace { edges, offline })
}

fn block_states(systems: &[SubdomainSystem], lam: &[f64], q: &[f64]) -> Result<Vec<BlockState>> {
    systems.par_iter().map(|s| s.solve(&s.gather(lam), &s.restrict_cells(q))).collect()
}

/// The interface operator on the full skeleton space.
#[derive(Debug, Clone)]
pub struct SkeletonOperator {
    pub a: Sparse,
    pub g: Vec<f64>,
    /// Dense diagonal block of `a` for each skeleton edge.
    pub edge_blocks: Vec<Mat<f64>>,
}

pub fn assemble_skeleton(grid: &GridHierarchy, systems: &[SubdomainSystem], q: &[f64]) -> Result<SkeletonOperator> {
    let n = grid.num_skeleton_faces();
    let loads: Vec<Vec<f64>> = systems.par_iter().map(|s| s.load(&s.restrict_cells(q))).collect::<Result<_>>()?;
    let mut t = Triplets::new(n);
    let mut g = vec![0.0; n];
    for (s, load) in systems.iter().zip(&loads) {
        let d = s.dtn();
        let iface = s.interface();
        for (i, &pi) in iface.iter().enumerate() {
            g[pi] += load[i];
            for (j, &pj) in iface.iter().enumerate() {
                t.push(pi, pj, d[(i, j)]);
            }
        }
    }
    let a = t.build();
    let mut edge_blocks: Vec<Mat<f64>> =
        (0..grid.skeleton_edges().len()).map(|s| Mat::zeros(grid.skeleton_range(s).len(), grid.skeleton_range(s).len())).collect();
    for s in systems {
        let d = s.dtn();
        for (e, r) in s.interface_edges() {
            let sk = grid.edge(*e).skeleton.unwrap();
            for i in r.clone() {
                for j in r.clone() {
                    edge_blocks[sk][(i - r.start, j - r.start)] += d[(i, j)];
                }
            }
        }
    }
    Ok(SkeletonOperator { a, g, edge_blocks })
}

impl SkeletonOperator {
    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        spmv(&self.a, x)
    }

    /// `g − a λ` componentwise.
    pub fn residual(&self, lam: &[f64]) -> Vec<f64> {
        self.g.iter().zip(self.apply(lam)).map(|(g, a)| g - a).collect()
    }

    /// Solve the full skeleton system: pinned sparse Cholesky, refined,
    /// constant projected out.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let n = self.dim();
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut t = Triplets::new(n);
        let cp = self.a.symbolic().col_ptr();
        let ri = self.a.symbolic().row_idx();
        for j in 0..n {
            for k in cp[j]..cp[j + 1] {
                if ri[k] != 0 && j != 0 {
                    t.push(ri[k], j, self.a.val()[k]);
                }
            }
        }
        t.push(0, 0, 1.0);
        let chol = SparseCholesky::new(&t.build())?;
        let mut x = chol.solve(&pin0(&self.g));
        for _ in 0..3 {
            let r = self.residual(&x);
            let d = chol.solve(&pin0(&r));
            x.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        }
        recenter(&mut x);
        Ok(x)
    }
}

fn pin0(v: &[f64]) -> Vec<f64> {
    let mut b = v.to_vec();
    b[0] = 0.0;
    b
}

/// Residual functional via flux mismatch: for each skeleton face, the sum
/// of the outward fluxes of both adjacent blocks. Equals `g − a λ`.
pub fn residual_on_skeleton(grid: &GridHierarchy, systems: &[SubdomainSystem], lam: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    let states = block_states(systems, lam, q)?;
    let mut r = vec![0.0; grid.num_skeleton_faces()];
    for (s, st) in systems.iter().zip(&states) {
        for (i, v) in s.interface_flux(st).into_iter().enumerate() {
            r[s.interface()[i]] += v;
        }
    }
    Ok(r)
}

/// `‖v‖²` in the skeleton operator, as a sum of non-negative block energies.
pub fn energy_sq(systems: &[SubdomainSystem], v: &[f64]) -> Result<f64> {
    let parts: Vec<f64> = systems
        .par_iter()
        .map(|s| {
            let lam = s.gather(v);
            let st = s.solve_dirichlet(&lam)?;
            Ok(block_energy(s, &st))
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

fn block_energy(s: &SubdomainSystem, st: &BlockState) -> f64 {
    let pc = st.out.len() / s.num_cells().max(1);
    let mut e = 0.0;
    for lc in 0..s.num_cells() {
        for (k, lf) in s.local_faces(lc).iter().enumerate() {
            let f = st.out[lc * pc + k];
            e += match *lf {
                LocalFace::Internal { t, .. } => 0.5 * f * f / t,
                LocalFace::Interface { t, .. } => f * f / t,
                LocalFace::Closed => 0.0,
            };
        }
    }
    e
}

/// Dual norm squared `rᵀ D⁻¹ r` of an edge residual.
pub fn dual_norm_sq(solver: &SymmetricSolver, r: &[f64]) -> f64 {
    dot(r, &solver.solve(r)).max(0.0)
}

/// Coarse interface operator on a mortar space.
#[derive(Debug, Clone)]
pub struct InterfaceOperator {
    pub a: Mat<f64>,
    pub g: Vec<f64>,
    /// Coarse coordinates of the constant multiplier.
    pub z: Vec<f64>,
}

/// Assemble `a_H` and `g_H` block by block from the Dirichlet-to-Neumann maps.
pub fn assemble_interface(grid: &GridHierarchy, space: &MortarSpace, systems: &[SubdomainSystem], q: &[f64]) -> Result<InterfaceOperator> {
    let offsets = space.offsets();
    let locals: Vec<(Vec<usize>, Mat<f64>, Vec<f64>)> = systems
        .par_iter()
        .map(|s| {
            let mut dofs = Vec::new();
            let mut cols: Vec<Vec<f64>> = Vec::new();
            let ni = s.interface().len();
            for (e, r) in s.interface_edges() {
                let sk = grid.edge(*e).skeleton.unwrap();
                for (k, b) in space.edges[sk].iter().enumerate() {
                    dofs.push(offsets[sk] + k);
                    let mut c = vec![0.0; ni];
                    c[r.clone()].copy_from_slice(b);
                    cols.push(c);
                }
            }
            let p = Mat::from_fn(ni, dofs.len(), |i, j| cols[j][i]);
            let dp = s.dtn() * &p;
            let a = p.transpose() * &dp;
            let load = s.load(&s.restrict_cells(q))?;
            let g = cols.iter().map(|c| dot(c, &load)).collect();
            Ok((dofs, a, g))
        })
        .collect::<Result<_>>()?;
    let n = space.dof();
    let mut a = Mat::<f64>::zeros(n, n);
    let mut g = vec![0.0; n];
    for (dofs, la, lg) in &locals {
        for (i, &di) in dofs.iter().enumerate() {
            g[di] += lg[i];
            for (j, &dj) in dofs.iter().enumerate() {
                a[(di, dj)] += la[(i, j)];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = s;
            a[(j, i)] = s;
        }
    }
    Ok(InterfaceOperator { a, g, z: space.constant_coords() })
}

/// Dense solve threshold; larger systems use deflated Jacobi-PCG.
pub const DENSE_LIMIT: usize = 5000;
const TARGET_RESIDUAL: f64 = 1e-12;
const FAIL_RESIDUAL: f64 = 1e-8;

/// Solve `a_H λ = g_H` on the complement of the constant.
pub fn solve_interface(op: &InterfaceOperator) -> Result<Vec<f64>> {
    let n = op.g.len();
    let gn = norm(&op.g);
    if n == 0 || gn == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let zz = dot(&op.z, &op.z);
    let trace: f64 = (0..n).map(|i| op.a[(i, i)]).sum();
    let rho = trace / n as f64;
    let resid = |x: &[f64]| -> Vec<f64> { op.g.iter().zip(matvec(op.a.as_ref(), x)).map(|(g, a)| g - a).collect() };
    let mut x;
    let mut iterations = 0;
    if n < DENSE_LIMIT {
        let m = Mat::from_fn(n, n, |i, j| op.a[(i, j)] + if zz > 0.0 { rho * op.z[i] * op.z[j] / zz } else { 0.0 });
        let solver = SymmetricSolver::new(m.as_ref());
        x = solver.solve(&op.g);
        for _ in 0..5 {
            let r = resid(&x);
            if norm(&r) <= TARGET_RESIDUAL * gn {
                break;
            }
            let d = solver.solve(&r);
            x.iter_mut().zip(d).for_each(|(a, b)| *a += b);
            iterations += 1;
        }
    } else {
        (x, iterations) = deflated_pcg(op, 10 * n);
    }
    deflate(&mut x, &op.z);
    let res = norm(&resid(&x)) / gn;
    if res > FAIL_RESIDUAL {
        return Err(MortarError::NotConverged { residual: res, iterations });
    }
    if res > TARGET_RESIDUAL {
        log::debug!("interface solve stalled at relative residual {res:e}");
    }
    Ok(x)
}

fn deflate(x: &mut [f64], z: &[f64]) {
    let zz = dot(z, z);
    if zz > 0.0 {
        let c = dot(x, z) / zz;
        x.iter_mut().zip(z).for_each(|(a, b)| *a -= c * b);
    }
}

fn deflated_pcg(op: &InterfaceOperator, max_iter: usize) -> (Vec<f64>, usize) {
    let n = op.g.len();
    let diag: Vec<f64> = (0..n).map(|i| op.a[(i, i)].max(f64::MIN_POSITIVE)).collect();
    let mut x = vec![0.0; n];
    let mut r = op.g.clone();
    deflate(&mut r, &op.z);
    let gn = norm(&r).max(f64::MIN_POSITIVE);
    let precond = |r: &[f64]| -> Vec<f64> {
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(a, d)| a / d).collect();
        deflate(&mut z, &op.z);
        z
    };
    let mut zv = precond(&r);
    let mut p = zv.clone();
    let mut rz = dot(&r, &zv);
    for it in 0..max_iter {
        if norm(&r) <= TARGET_RESIDUAL * gn {
            return (x, it);
        }
        let ap = matvec(op.a.as_ref(), &p);
        let alpha = rz / dot(&p, &ap);
        x.iter_mut().zip(&p).for_each(|(a, b)| *a += alpha * b);
        r.iter_mut().zip(&ap).for_each(|(a, b)| *a -= alpha * b);
        zv = precond(&r);
        let rz1 = dot(&r, &zv);
        let beta = rz1 / rz;
        rz = rz1;
        p.iter_mut().zip(&zv).for_each(|(a, b)| *a = b + beta * *a);
    }
    (x, max_iter)
}

/// Recovered multiscale fields.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiscaleSolution {
    /// Mortar values on the skeleton.
    pub lambda: Vec<f64>,
    pub p: Vec<f64>,
    pub flux: CellFluxes,
    pub level: usize,
}

/// Superpose the block solves for skeleton values `lam` and source `q`;
/// pressure is re-centered to mean zero.
pub fn recover_solution(grid: &GridHierarchy, systems: &[SubdomainSystem], lam: &[f64], q: &[f64]) -> Result<MultiscaleSolution> {
    check_compatible(q)?;
    let states = block_states(systems, lam, q)?;
    let mut p = vec![0.0; grid.num_cells()];
    let mut flux = CellFluxes::zeros(grid);
    let pc = flux.per_cell;
    for (s, st) in systems.iter().zip(&states) {
        for (lc, &c) in s.cells().iter().enumerate() {
            p[c] = st.p[lc];
            flux.out[c * pc..(c + 1) * pc].copy_from_slice(&st.out[lc * pc..(lc + 1) * pc]);
        }
    }
    let mut lambda = lam.to_vec();
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    p.iter_mut().for_each(|v| *v -= mean);
    lambda.iter_mut().for_each(|v| *v -= mean);
    Ok(MultiscaleSolution { lambda, p, flux, level: 0 })
}

/// Solve the coarse problem in `space` and recover.
pub fn multiscale_solve(grid: &GridHierarchy, space: &MortarSpace, systems: &[SubdomainSystem], q: &[f64]) -> Result<MultiscaleSolution> {
    let op = assemble_interface(grid, space, systems, q)?;
    let c = solve_interface(&op)?;
    recover_solution(grid, systems, &space.prolong(grid, &c), q)
}

/// `‖u‖²_κ = ∫ κ⁻¹ |u|²` by cell-midpoint quadrature of the face fluxes.
pub fn velocity_norm_sq(grid: &GridHierarchy, perm: &PermField, u: &CellFluxes) -> f64 {
    let vol = grid.cell_volume();
    (0..grid.num_cells())
        .map(|c| {
            let f = u.cell(c);
            let s: f64 = (0..grid.dim())
                .map(|a| {
                    let mid = (f[2 * a + 1] - f[2 * a]) / (2.0 * grid.face_area(a));
                    mid * mid
                })
                .sum();
            vol * s / perm.kappa()[c]
        })
        .sum()
}

/// Relative errors `(e_p, e_u)`: volume-weighted L2 in pressure and
/// κ⁻¹-weighted in velocity.
pub fn errors(grid: &GridHierarchy, perm: &PermField, p: &[f64], u: &CellFluxes, p_ref: &[f64], u_ref: &CellFluxes) -> Result<(f64, f64)> {
    let pn: f64 = p_ref.iter().map(|v| v * v).sum();
    if pn == 0.0 {
        return Err(MortarError::ZeroReference("pressure"));
    }
    let un = velocity_norm_sq(grid, perm, u_ref);
    if un == 0.0 {
        return Err(MortarError::ZeroReference("velocity"));
    }
    let dp: f64 = p.iter().zip(p_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    let diff = CellFluxes { per_cell: u.per_cell, out: u.out.iter().zip(&u_ref.out).map(|(a, b)| a - b).collect() };
    Ok(((dp / pn).sqrt(), (velocity_norm_sq(grid, perm, &diff) / un).sqrt()))
}

/// Total `+axis` flux through each interior edge, averaged over both sides.
pub fn edge_totals(grid: &GridHierarchy, systems: &[SubdomainSystem], lam: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    let face = side_averaged(grid, systems, lam, q)?;
    Ok((0..grid.skeleton_edges().len()).map(|s| face[grid.skeleton_range(s)].iter().sum()).collect())
}

fn side_averaged(grid: &GridHierarchy, systems: &[SubdomainSystem], lam: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    let states = block_states(systems, lam, q)?;
    let mut face = vec![0.0; grid.num_skeleton_faces()];
    for (s, st) in systems.iter().zip(&states) {
        let out = s.interface_flux(st);
        for (e, r) in s.interface_edges() {
            let sign = grid.edge(*e).outward_sign(s.block).unwrap();
            for i in r.clone() {
                face[s.interface()[i]] += 0.5 * sign * out[i];
            }
        }
    }
    Ok(face)
}

/// Minimal graph-Laplacian correction of edge totals (`+axis` orientation)
/// so that every block's net outflow equals its source.
fn balance_blocks(grid: &GridHierarchy, q: &[f64], totals: &mut [f64]) {
    let nb = grid.num_blocks();
    let mut res = vec![0.0; nb];
    for b in 0..nb {
        res[b] = grid.block_cells(b).iter().map(|&c| q[c]).sum();
    }
    let mut lap = Mat::<f64>::zeros(nb, nb);
    for (s, &t) in totals.iter().enumerate() {
        let e = grid.edge(grid.skeleton_edges()[s]);
        let (m, p) = (e.minus.expect("skeleton edge is interior"), e.plus.expect("skeleton edge is interior"));
        res[m] -= t;
        res[p] += t;
        lap[(m, m)] += 1.0;
        lap[(p, p)] += 1.0;
        lap[(m, p)] -= 1.0;
        lap[(p, m)] -= 1.0;
    }
    lap[(0, 0)] += 1.0;
    let psi = SymmetricSolver::new(lap.as_ref()).solve(&res);
    for (s, t) in totals.iter_mut().enumerate() {
        let e = grid.edge(grid.skeleton_edges()[s]);
        *t += psi[e.minus.unwrap()] - psi[e.plus.unwrap()];
    }
}

/// Single-valued, cell-wise conservative fine fluxes from mortar values:
/// skeleton fluxes are averaged over both sides, shifted per edge to match
/// `targets` (edge totals in `+axis` orientation; defaults to the totals of
/// `lam` itself) after a minimal correction that balances every block, and
/// block interiors are filled by Neumann solves.
pub fn project_conservative(
    grid: &GridHierarchy,
    systems: &[SubdomainSystem],
    lam: &[f64],
    q: &[f64],
    targets: Option<&[f64]>,
) -> Result<FaceFlux> {
    let mut face = side_averaged(grid, systems, lam, q)?;
    let mut totals: Vec<f64> = match targets {
        Some(t) => t.to_vec(),
        None => (0..grid.skeleton_edges().len()).map(|s| face[grid.skeleton_range(s)].iter().sum()).collect(),
    };
    balance_blocks(grid, q, &mut totals);
    for (s, &target) in totals.iter().enumerate() {
        let r = grid.skeleton_range(s);
        let shift = (target - face[r.clone()].iter().sum::<f64>()) / r.len() as f64;
        face[r].iter_mut().for_each(|v| *v += shift);
    }
    let states: Vec<BlockState> = systems
        .par_iter()
        .map(|s| {
            let mut b = vec![0.0; s.interface().len()];
            for (e, r) in s.interface_edges() {
                let sign = grid.edge(*e).outward_sign(s.block).unwrap();
                for i in r.clone() {
                    b[i] = sign * face[s.interface()[i]];
                }
            }
            s.solve_neumann(&b, &s.restrict_cells(q))
        })
        .collect::<Result<_>>()?;
    let mut flux = vec![0.0; grid.num_faces()];
    for (s, st) in systems.iter().zip(&states) {
        let pc = 2 * grid.dim();
        for (lc, &c) in s.cells().iter().enumerate() {
            for (k, (f, sign)) in grid.cell_faces(c).into_iter().enumerate() {
                if matches!(s.local_faces(lc)[k], LocalFace::Internal { .. }) && sign > 0.0 {
                    flux[f] = st.out[lc * pc + k];
                }
            }
        }
    }
    for s in 0..grid.skeleton_edges().len() {
        let e = grid.edge(grid.skeleton_edges()[s]);
        for (k, &f) in e.faces.iter().enumerate() {
            flux[f] = face[grid.skeleton_range(s).start + k];
        }
    }
    Ok(FaceFlux { flux })
}

/// Face pressure traces on every face from skeleton values: block solves
/// with source `q` (or zero) fill the interior faces.
pub fn extend_trace(grid: &GridHierarchy, systems: &[SubdomainSystem], lam: &[f64], q: Option<&[f64]>) -> Result<Vec<f64>> {
    let zero = vec![0.0; grid.num_cells()];
    let q = q.unwrap_or(&zero);
    let states = block_states(systems, lam, q)?;
    let mut out = vec![0.0; grid.num_faces()];
    for (s, st) in systems.iter().zip(&states) {
        s.traces(grid, st, &s.gather(lam), &mut out);
    }
    Ok(out)
}
