//! Lowest-order mixed kernels on Cartesian cells.
//!
//! With the trapezoidal velocity mass the element system decouples face by
//! face, so a cell's response to face pressures is governed by the half
//! transmissibilities `T = 2·κ·|e|/h`. All fluxes below are integrated over
//! their face. Sources are integrated over their cell.

use faer::Mat;
use rayon::prelude::*;

use crate::error::{MortarError, Result};
use crate::grid::{CellBox, GridHierarchy};
use crate::linalg::{spmv, SparseCholesky, Triplets};
use crate::perm::PermField;

/// Half transmissibility between a cell center and one of its faces.
pub fn half_trans(grid: &GridHierarchy, kappa: f64, axis: usize) -> f64 {
    2.0 * kappa * grid.face_area(axis) / grid.h()[axis]
}

fn harmonic(a: f64, b: f64) -> f64 {
    a * b / (a + b)
}

/// Integrate a source density over cells.
pub fn integrate(grid: &GridHierarchy, f: &[f64]) -> Vec<f64> {
    let v = grid.cell_volume();
    f.iter().map(|x| x * v).collect()
}

/// Outward fluxes per cell, `2·dim` per cell in [`GridHierarchy::cell_faces`] order.
/// Fluxes may be two-valued across faces; each cell carries its own.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFluxes {
    pub per_cell: usize,
    pub out: Vec<f64>,
}

impl CellFluxes {
    pub fn zeros(grid: &GridHierarchy) -> Self {
        CellFluxes { per_cell: 2 * grid.dim(), out: vec![0.0; 2 * grid.dim() * grid.num_cells()] }
    }

    pub fn cell(&self, c: usize) -> &[f64] {
        &self.out[c * self.per_cell..(c + 1) * self.per_cell]
    }

    pub fn net_outflow(&self, c: usize) -> f64 {
        self.cell(c).iter().sum()
    }

    /// Largest per-cell imbalance `|Σ out − q|`, relative to the larger of the
    /// source and flux magnitudes.
    pub fn conservation_error(&self, q: &[f64]) -> f64 {
        let scale = q
            .iter()
            .chain(self.out.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        (0..q.len()).map(|c| (self.net_outflow(c) - q[c]).abs()).fold(0.0, f64::max) / scale
    }

    pub fn scale(&mut self, a: f64) {
        self.out.iter_mut().for_each(|v| *v *= a);
    }
}

/// Single-valued face fluxes in the `+axis` orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFlux {
    pub flux: Vec<f64>,
}

impl FaceFlux {
    pub fn to_cell_fluxes(&self, grid: &GridHierarchy) -> CellFluxes {
        let mut cf = CellFluxes::zeros(grid);
        let pc = cf.per_cell;
        for c in 0..grid.num_cells() {
            for (k, (f, s)) in grid.cell_faces(c).into_iter().enumerate() {
                cf.out[c * pc + k] = s * self.flux[f];
            }
        }
        cf
    }

    /// Largest mismatch between the two sides of any interior face.
    pub fn from_cell_fluxes(grid: &GridHierarchy, cf: &CellFluxes) -> (Self, f64) {
        let mut flux = vec![0.0; grid.num_faces()];
        let mut seen = vec![false; grid.num_faces()];
        let mut mismatch = 0.0f64;
        for c in 0..grid.num_cells() {
            for (k, (f, s)) in grid.cell_faces(c).into_iter().enumerate() {
                let v = s * cf.cell(c)[k];
                if seen[f] {
                    mismatch = mismatch.max((flux[f] - v).abs());
                    flux[f] = 0.5 * (flux[f] + v);
                } else {
                    flux[f] = v;
                    seen[f] = true;
                }
            }
        }
        (FaceFlux { flux }, mismatch)
    }
}

/// Role of a face seen from one cell of a block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalFace {
    /// Shared with another cell of the block (local index): harmonic and own
    /// half transmissibility.
    Internal { other: usize, t: f64, own: f64 },
    /// On a coarse interface: index into the block's interface list, half transmissibility.
    Interface { index: usize, t: f64 },
    /// On the domain boundary, no flow.
    Closed,
}

/// Cell pressures and outward fluxes of one block solve.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub p: Vec<f64>,
    pub out: Vec<f64>,
}

/// Factorized mixed system of one coarse block.
#[derive(Debug, Clone)]
pub struct SubdomainSystem {
    pub block: usize,
    per_cell: usize,
    cells: Vec<usize>,
    faces: Vec<LocalFace>,
    /// Skeleton positions of the block's interface faces.
    interface: Vec<usize>,
    iface_cell: Vec<usize>,
    iface_t: Vec<f64>,
    /// Interface edges with their ranges in the local interface list.
    iface_edges: Vec<(usize, std::ops::Range<usize>)>,
    dirichlet: SparseCholesky,
    neumann: SparseCholesky,
    dtn: Mat<f64>,
}

/// Assemble and factorize the block's Dirichlet and Neumann systems.
pub fn assemble_subdomain(grid: &GridHierarchy, perm: &PermField, block: usize) -> Result<SubdomainSystem> {
    perm.check_grid(grid)?;
    let bx = grid.block_box(block);
    let cells = grid.block_cells(block);
    let n = grid.n();
    let local = |ijk: [usize; 3]| (ijk[0] - bx.lo[0]) + n[0] * ((ijk[1] - bx.lo[1]) + n[1] * (ijk[2] - bx.lo[2]));
    let kappa = perm.kappa();
    let dim = grid.dim();
    let per_cell = 2 * dim;

    let mut interface = Vec::new();
    let mut iface_edges = Vec::new();
    for (e, range) in grid.block_interface(block) {
        let start = interface.len();
        interface.extend(range);
        iface_edges.push((e, start..interface.len()));
    }
    let mut iface_cell = vec![0; interface.len()];
    let mut iface_t = vec![0.0; interface.len()];

    let mut faces = Vec::with_capacity(per_cell * cells.len());
    for (lc, &c) in cells.iter().enumerate() {
        for (f, _) in grid.cell_faces(c) {
            let (axis, _) = grid.face_coords(f);
            let t = half_trans(grid, kappa[c], axis);
            let lf = match grid.face_cells(f) {
                (Some(m), Some(p)) => {
                    let other = if m == c { p } else { m };
                    let oc = grid.cell_coords(other);
                    if bx.contains(oc) {
                        LocalFace::Internal {
                            other: local(oc),
                            t: harmonic(t, half_trans(grid, kappa[other], axis)),
                            own: t,
                        }
                    } else {
                        let pos = grid.skeleton_position(f).expect("block face between blocks is on the skeleton");
                        let index = interface.iter().position(|&s| s == pos).expect("interface face listed");
                        iface_cell[index] = lc;
                        iface_t[index] = t;
                        LocalFace::Interface { index, t }
                    }
                }
                _ => LocalFace::Closed,
            };
            faces.push(lf);
        }
    }

    let nc = cells.len();
    let mut sd = Triplets::new(nc);
    let mut sn = Triplets::new(nc);
    let mut reg0 = 0.0;
    for lc in 0..nc {
        for lf in &faces[lc * per_cell..(lc + 1) * per_cell] {
            match *lf {
                LocalFace::Internal { other, t, .. } => {
                    sd.push(lc, lc, t);
                    sd.push(lc, other, -t);
                    sn.push(lc, lc, t);
                    sn.push(lc, other, -t);
                    if lc == 0 {
                        reg0 += t;
                    }
                }
                LocalFace::Interface { t, .. } => sd.push(lc, lc, t),
                LocalFace::Closed => {}
            }
        }
    }
    // Rank-one term on cell 0 makes the Neumann operator definite without
    // dropping any balance equation.
    sn.push(0, 0, if reg0 > 0.0 { reg0 } else { 1.0 });
    let dirichlet = SparseCholesky::new(&sd.build()).map_err(|_| MortarError::BlockFactorization { block })?;
    let neumann = SparseCholesky::new(&sn.build()).map_err(|_| MortarError::BlockFactorization { block })?;

    let ni = interface.len();
    let c_mat = Mat::from_fn(nc, ni, |i, j| if iface_cell[j] == i { iface_t[j] } else { 0.0 });
    let x = dirichlet.solve_mat(c_mat);
    let mut dtn = Mat::from_fn(ni, ni, |e, j| {
        let d = if e == j { iface_t[e] } else { 0.0 };
        d - iface_t[e] * x[(iface_cell[e], j)]
    });
    for i in 0..ni {
        for j in 0..i {
            let s = 0.5 * (dtn[(i, j)] + dtn[(j, i)]);
            dtn[(i, j)] = s;
            dtn[(j, i)] = s;
        }
    }
    Ok(SubdomainSystem {
        block,
        per_cell,
        cells,
        faces,
        interface,
        iface_cell,
        iface_t,
        iface_edges,
        dirichlet,
        neumann,
        dtn,
    })
}

/// Assemble every block in parallel, in block order.
pub fn assemble_all(grid: &GridHierarchy, perm: &PermField) -> Result<Vec<SubdomainSystem>> {
    (0..grid.num_blocks()).into_par_iter().map(|b| assemble_subdomain(grid, perm, b)).collect()
}

impl SubdomainSystem {
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Skeleton positions of the interface faces, in local interface order.
    pub fn interface(&self) -> &[usize] {
        &self.interface
    }

    pub fn interface_edges(&self) -> &[(usize, std::ops::Range<usize>)] {
        &self.iface_edges
    }

    pub fn local_faces(&self, lc: usize) -> &[LocalFace] {
        &self.faces[lc * self.per_cell..(lc + 1) * self.per_cell]
    }

    /// Dirichlet-to-Neumann operator on the interface faces:
    /// `a_i(λ, μ) = μᵀ D λ` equals minus the outward flux response paired with μ.
    pub fn dtn(&self) -> &Mat<f64> {
        &self.dtn
    }

    /// Gather the block's interface values from a skeleton vector.
    pub fn gather(&self, skeleton: &[f64]) -> Vec<f64> {
        self.interface.iter().map(|&s| skeleton[s]).collect()
    }

    /// Restrict a global cell vector to the block.
    pub fn restrict_cells(&self, q: &[f64]) -> Vec<f64> {
        self.cells.iter().map(|&c| q[c]).collect()
    }

    fn state(&self, p: Vec<f64>, lam: &[f64], boundary_flux: Option<&[f64]>) -> BlockState {
        let mut out = vec![0.0; p.len() * self.per_cell];
        for lc in 0..p.len() {
            for (k, lf) in self.local_faces(lc).iter().enumerate() {
                out[lc * self.per_cell + k] = match *lf {
                    LocalFace::Internal { other, t, .. } => t * (p[lc] - p[other]),
                    LocalFace::Interface { index, t } => match boundary_flux {
                        Some(b) => b[index],
                        None => t * (p[lc] - lam[index]),
                    },
                    LocalFace::Closed => 0.0,
                };
            }
        }
        BlockState { p, out }
    }

    /// Two correction sweeps on the per-cell flux balance. Differences of
    /// large pressures lose digits on high-transmissibility faces; the
    /// corrections are small and do not. Interface fluxes move only when the
    /// interface pressure is prescribed.
    fn refine_balance(&self, st: &mut BlockState, q: &[f64], solver: &SparseCholesky, dirichlet: bool) {
        let pc = self.per_cell;
        for _ in 0..2 {
            let r: Vec<f64> = (0..self.cells.len()).map(|lc| q[lc] - st.out[lc * pc..(lc + 1) * pc].iter().sum::<f64>()).collect();
            let d = solver.solve(&r);
            for lc in 0..self.cells.len() {
                for (k, lf) in self.local_faces(lc).iter().enumerate() {
                    match *lf {
                        LocalFace::Internal { other, t, .. } => st.out[lc * pc + k] += t * (d[lc] - d[other]),
                        LocalFace::Interface { t, .. } if dirichlet => st.out[lc * pc + k] += t * d[lc],
                        _ => {}
                    }
                }
            }
            st.p.iter_mut().zip(d).for_each(|(x, d)| *x += d);
        }
    }

    /// Pressure λ on the interface faces and integrated source `q` per block cell.
    pub fn solve(&self, lam: &[f64], q: &[f64]) -> Result<BlockState> {
        if lam.len() != self.interface.len() {
            return Err(MortarError::LengthMismatch { what: "interface values", expected: self.interface.len(), got: lam.len() });
        }
        if q.len() != self.cells.len() {
            return Err(MortarError::LengthMismatch { what: "block source", expected: self.cells.len(), got: q.len() });
        }
        let mut rhs = q.to_vec();
        for (e, &l) in lam.iter().enumerate() {
            rhs[self.iface_cell[e]] += self.iface_t[e] * l;
        }
        let p = self.dirichlet.solve(&rhs);
        let mut st = self.state(p, lam, None);
        self.refine_balance(&mut st, q, &self.dirichlet, true);
        Ok(st)
    }

    /// Zero-source Dirichlet problem.
    pub fn solve_dirichlet(&self, lam: &[f64]) -> Result<BlockState> {
        self.solve(lam, &vec![0.0; self.cells.len()])
    }

    /// Source problem with zero interface pressure.
    pub fn solve_source(&self, q: &[f64]) -> Result<BlockState> {
        self.solve(&vec![0.0; self.interface.len()], q)
    }

    /// Outward interface fluxes of the source problem: the block's load.
    pub fn load(&self, q: &[f64]) -> Result<Vec<f64>> {
        let s = self.solve_source(q)?;
        Ok(self.interface_flux(&s))
    }

    /// Outward fluxes on the interface faces, local interface order.
    pub fn interface_flux(&self, s: &BlockState) -> Vec<f64> {
        let mut out = vec![0.0; self.interface.len()];
        for lc in 0..self.cells.len() {
            for (k, lf) in self.local_faces(lc).iter().enumerate() {
                if let LocalFace::Interface { index, .. } = lf {
                    out[*index] = s.out[lc * self.per_cell + k];
                }
            }
        }
        out
    }

    /// Outward flux on the fine faces of one coarse edge of this block.
    pub fn flux_trace(&self, grid: &GridHierarchy, s: &BlockState, edge: usize) -> Result<Vec<f64>> {
        let e = grid.edge(edge);
        if e.outward_sign(self.block).is_none() {
            return Err(MortarError::InvalidGrid(format!("edge {edge} does not bound block {}", self.block)));
        }
        match self.iface_edges.iter().find(|(id, _)| *id == edge) {
            Some((_, r)) => Ok(self.interface_flux(s)[r.clone()].to_vec()),
            None => Ok(vec![0.0; e.faces.len()]),
        }
    }

    /// Neumann problem: prescribed outward interface fluxes and source, which
    /// must balance. Pressure is determined up to the regularization on the
    /// first cell.
    pub fn solve_neumann(&self, boundary_flux: &[f64], q: &[f64]) -> Result<BlockState> {
        if boundary_flux.len() != self.interface.len() {
            return Err(MortarError::LengthMismatch { what: "interface fluxes", expected: self.interface.len(), got: boundary_flux.len() });
        }
        let mut rhs = q.to_vec();
        for (e, &b) in boundary_flux.iter().enumerate() {
            rhs[self.iface_cell[e]] -= b;
        }
        let p = self.neumann.solve(&rhs);
        let mut st = self.state(p, &[], Some(boundary_flux));
        self.refine_balance(&mut st, q, &self.neumann, false);
        Ok(st)
    }

    /// Face pressure traces of a block state: interface faces take λ, internal
    /// faces the flux-consistent interpolation, closed faces the cell pressure.
    pub fn traces(&self, grid: &GridHierarchy, s: &BlockState, lam: &[f64], out: &mut [f64]) {
        for (lc, &c) in self.cells.iter().enumerate() {
            for (k, (f, _)) in grid.cell_faces(c).into_iter().enumerate() {
                let flux = s.out[lc * self.per_cell + k];
                out[f] = match self.local_faces(lc)[k] {
                    LocalFace::Interface { index, .. } => lam[index],
                    LocalFace::Closed => s.p[lc],
                    LocalFace::Internal { own, .. } => s.p[lc] - flux / own,
                };
            }
        }
    }

    /// Dense saddle-point matrix over all block faces (normal-velocity unknowns,
    /// `+axis` orientation) followed by the cell pressures:
    /// `[[M, -Dᵀ], [-D, 0]]`, with `M` the trapezoidal κ⁻¹ mass and `D` the
    /// integrated divergence. Returns the matrix and the global face ids.
    pub fn mixed_matrix(&self, grid: &GridHierarchy, perm: &PermField) -> (Mat<f64>, Vec<usize>) {
        let mut faces: Vec<usize> = self.cells.iter().flat_map(|&c| grid.cell_faces(c).into_iter().map(|(f, _)| f)).collect();
        faces.sort_unstable();
        faces.dedup();
        let nf = faces.len();
        let nc = self.cells.len();
        let mut m = Mat::<f64>::zeros(nf + nc, nf + nc);
        let vol = grid.cell_volume();
        for (lc, &c) in self.cells.iter().enumerate() {
            for (f, s) in grid.cell_faces(c) {
                let (axis, _) = grid.face_coords(f);
                let i = faces.binary_search(&f).unwrap();
                m[(i, i)] += vol / (2.0 * perm.kappa()[c]);
                let d = s * grid.face_area(axis);
                m[(i, nf + lc)] -= d;
                m[(nf + lc, i)] -= d;
            }
        }
        (m, faces)
    }
}

/// Kind of a face in a fine hybrid region system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    Unknown,
    /// Region boundary inside the domain, zero multiplier.
    Dirichlet,
    /// Domain boundary, no flow.
    Closed,
}

/// Cell-condensed system on fine face multipliers of a region.
#[derive(Debug, Clone)]
pub struct FineHybridSystem {
    pub region: CellBox,
    cells: Vec<usize>,
    faces: Vec<usize>,
    matrix: crate::linalg::Sparse,
    load: Vec<f64>,
    /// Cell sources, aligned with `cells`.
    q: Vec<f64>,
    /// Per-cell (face position, half transmissibility) for open faces.
    stencil: Vec<Vec<(Option<usize>, f64)>>,
    factor: Option<SparseCholesky>,
    singular: bool,
}

/// Condensed 2d×2d matrix of one cell; `open[k]` marks faces that are not
/// closed (closed faces carry zero transmissibility).
pub fn element_matrix(grid: &GridHierarchy, kappa: f64, open: &[bool]) -> Mat<f64> {
    let t: Vec<f64> = (0..2 * grid.dim()).map(|k| if open[k] { half_trans(grid, kappa, k / 2) } else { 0.0 }).collect();
    let ts: f64 = t.iter().sum();
    Mat::from_fn(t.len(), t.len(), |i, j| {
        let d = if i == j { t[i] } else { 0.0 };
        if ts > 0.0 {
            d - t[i] * t[j] / ts
        } else {
            d
        }
    })
}

fn face_kind(grid: &GridHierarchy, region: &CellBox, f: usize) -> FaceKind {
    match grid.face_cells(f) {
        (Some(m), Some(p)) => {
            let (im, ip) = (region.contains(grid.cell_coords(m)), region.contains(grid.cell_coords(p)));
            if im && ip {
                FaceKind::Unknown
            } else {
                FaceKind::Dirichlet
            }
        }
        _ => FaceKind::Closed,
    }
}

/// Assemble the condensed face system over `region`, with load from the
/// integrated source `q` (global cell vector) if given.
pub fn assemble_fine_hybrid(
    grid: &GridHierarchy,
    perm: &PermField,
    region: CellBox,
    q: Option<&[f64]>,
) -> Result<FineHybridSystem> {
    perm.check_grid(grid)?;
    let cells: Vec<usize> = region.iter().map(|c| grid.cell_index(c)).collect();
    let mut faces: Vec<usize> = cells
        .iter()
        .flat_map(|&c| grid.cell_faces(c).into_iter().map(|(f, _)| f))
        .filter(|&f| face_kind(grid, &region, f) == FaceKind::Unknown)
        .collect();
    faces.sort_unstable();
    faces.dedup();
    let mut t = Triplets::new(faces.len());
    let mut load = vec![0.0; faces.len()];
    let mut has_dirichlet = false;
    let mut stencil = Vec::with_capacity(cells.len());
    for &c in &cells {
        let cf = grid.cell_faces(c);
        let kinds: Vec<FaceKind> = cf.iter().map(|&(f, _)| face_kind(grid, &region, f)).collect();
        has_dirichlet |= kinds.contains(&FaceKind::Dirichlet);
        let open: Vec<bool> = kinds.iter().map(|k| *k != FaceKind::Closed).collect();
        let a = element_matrix(grid, perm.kappa()[c], &open);
        let tv: Vec<f64> = (0..cf.len()).map(|k| if open[k] { half_trans(grid, perm.kappa()[c], k / 2) } else { 0.0 }).collect();
        let ts: f64 = tv.iter().sum();
        let idx: Vec<Option<usize>> =
            cf.iter().zip(&kinds).map(|(&(f, _), k)| (*k == FaceKind::Unknown).then(|| faces.binary_search(&f).unwrap())).collect();
        stencil.push(idx.iter().zip(&tv).filter(|(_, t)| **t > 0.0).map(|(i, t)| (*i, *t)).collect());
        for i in 0..cf.len() {
            let Some(gi) = idx[i] else { continue };
            if let (Some(q), true) = (q, ts > 0.0) {
                load[gi] += tv[i] * q[c] / ts;
            }
            for j in 0..cf.len() {
                if let Some(gj) = idx[j] {
                    t.push(gi, gj, a[(i, j)]);
                }
            }
        }
    }
    let singular = !has_dirichlet;
    let qc = cells.iter().map(|&c| q.map_or(0.0, |q| q[c])).collect();
    Ok(FineHybridSystem { region, cells, faces, matrix: t.build(), load, q: qc, stencil, factor: None, singular })
}

impl FineHybridSystem {
    pub fn faces(&self) -> &[usize] {
        &self.faces
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn matrix(&self) -> &crate::linalg::Sparse {
        &self.matrix
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// True for regions without Dirichlet faces (constant kernel).
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    pub fn position(&self, face: usize) -> Option<usize> {
        self.faces.binary_search(&face).ok()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        spmv(&self.matrix, x)
    }

    /// Factorize the operator, pinning the first multiplier when singular.
    pub fn factorize(&mut self) -> Result<()> {
        if self.factor.is_some() {
            return Ok(());
        }
        let m = if self.singular { pinned(&self.matrix) } else { self.matrix.clone() };
        self.factor = Some(SparseCholesky::new(&m)?);
        Ok(())
    }

    /// Solve against a right-hand side over the unknown faces. For singular
    /// systems the first multiplier is fixed at zero.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let f = self.factor.as_ref().ok_or_else(|| MortarError::Factorization("fine hybrid system not factorized".into()))?;
        let mut b = rhs.to_vec();
        if self.singular {
            b[0] = 0.0;
        }
        Ok(f.solve(&b))
    }

    /// Gather region unknowns from a global face vector.
    pub fn gather(&self, global: &[f64]) -> Vec<f64> {
        self.faces.iter().map(|&f| global[f]).collect()
    }

    /// `g − a ξ` with ξ given as a global face vector. Evaluated as the sum of
    /// the cells' outward fluxes on each face, which avoids cancellation
    /// between large multiplier values.
    pub fn residual(&self, xi: &[f64]) -> Vec<f64> {
        let lam = self.gather(xi);
        let mut r = vec![0.0; self.faces.len()];
        for (st, &qc) in self.stencil.iter().zip(&self.q) {
            let ts: f64 = st.iter().map(|(_, t)| t).sum();
            if ts == 0.0 {
                continue;
            }
            let p = (qc + st.iter().map(|&(i, t)| i.map_or(0.0, |i| t * lam[i])).sum::<f64>()) / ts;
            for &(i, t) in st {
                if let Some(i) = i {
                    r[i] += t * (p - lam[i]);
                }
            }
        }
        r
    }

    /// Cell pressures and outward fluxes from multipliers on the unknown faces
    /// (Dirichlet faces take zero). Returns global-length arrays; cells outside
    /// the region are left at zero.
    pub fn recover(&self, grid: &GridHierarchy, perm: &PermField, lam: &[f64], q: &[f64]) -> (Vec<f64>, CellFluxes) {
        let mut p = vec![0.0; grid.num_cells()];
        let mut cf = CellFluxes::zeros(grid);
        let pc = cf.per_cell;
        for &c in &self.cells {
            let faces = grid.cell_faces(c);
            let mut ts = 0.0;
            let mut acc = q[c];
            let mut vals = Vec::with_capacity(faces.len());
            for (k, &(f, _)) in faces.iter().enumerate() {
                let kind = face_kind(grid, &self.region, f);
                let t = if kind == FaceKind::Closed { 0.0 } else { half_trans(grid, perm.kappa()[c], k / 2) };
                let l = self.position(f).map_or(0.0, |i| lam[i]);
                ts += t;
                acc += t * l;
                vals.push((t, l));
            }
            let pk = if ts > 0.0 { acc / ts } else { 0.0 };
            p[c] = pk;
            for (k, (t, l)) in vals.into_iter().enumerate() {
                cf.out[c * pc + k] = t * (pk - l);
            }
        }
        (p, cf)
    }
}

fn pinned(a: &crate::linalg::Sparse) -> crate::linalg::Sparse {
    let mut t = Triplets::new(a.nrows());
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    for j in 0..a.ncols() {
        for k in cp[j]..cp[j + 1] {
            let i = ri[k];
            if i != 0 && j != 0 {
                t.push(i, j, a.val()[k]);
            }
        }
    }
    t.push(0, 0, 1.0);
    t.build()
}

/// Fine-scale pressure and fluxes.
#[derive(Debug, Clone, PartialEq)]
pub struct FineSolution {
    pub p: Vec<f64>,
    pub flux: FaceFlux,
}

impl FineSolution {
    pub fn cell_fluxes(&self, grid: &GridHierarchy) -> CellFluxes {
        self.flux.to_cell_fluxes(grid)
    }
}

/// Integrated source with density `+density` in the top-left fine cell and
/// `-density` in the bottom-right one (first layer in 3D).
pub fn corner_sources(grid: &GridHierarchy, density: f64) -> Vec<f64> {
    let [nx, ny, _] = grid.fine();
    let mut q = vec![0.0; grid.num_cells()];
    q[grid.cell_index([0, ny - 1, 0])] += density * grid.cell_volume();
    q[grid.cell_index([nx - 1, 0, 0])] -= density * grid.cell_volume();
    q
}

/// Check that the integrated source sums to zero.
pub fn check_compatible(q: &[f64]) -> Result<()> {
    let total: f64 = q.iter().sum();
    let scale: f64 = q.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
    if total.abs() > 1e-12 * scale {
        return Err(MortarError::IncompatibleSource { imbalance: total });
    }
    Ok(())
}

/// Subtract the volume-weighted mean (uniform cells, so the plain mean).
pub fn recenter(p: &mut [f64]) {
    let mean = p.iter().sum::<f64>() / p.len().max(1) as f64;
    p.iter_mut().for_each(|v| *v -= mean);
}

/// Monolithic fine solve with no-flow boundary. `q` is the integrated source.
pub fn fine_reference_solve(grid: &GridHierarchy, perm: &PermField, q: &[f64]) -> Result<FineSolution> {
    perm.check_grid(grid)?;
    if q.len() != grid.num_cells() {
        return Err(MortarError::LengthMismatch { what: "source", expected: grid.num_cells(), got: q.len() });
    }
    check_compatible(q)?;
    let nc = grid.num_cells();
    let kappa = perm.kappa();
    let mut links = Vec::new();
    for f in 0..grid.num_faces() {
        if let (Some(m), Some(p)) = grid.face_cells(f) {
            let (axis, _) = grid.face_coords(f);
            links.push((f, m, p, harmonic(half_trans(grid, kappa[m], axis), half_trans(grid, kappa[p], axis))));
        }
    }
    // The Neumann operator plus a rank-one term on cell 0. Since the source is
    // compatible the solution still satisfies every balance equation, and
    // refinement acts on all of them.
    let mut t = Triplets::new(nc);
    let mut diag0 = 0.0;
    for &(_, m, p, tr) in &links {
        for (a, b) in [(m, p), (p, m)] {
            t.push(a, a, tr);
            t.push(a, b, -tr);
            if a == 0 {
                diag0 += tr;
            }
        }
    }
    let s = t.build();
    let mut reg = t.clone();
    reg.push(0, 0, diag0.max(f64::MIN_POSITIVE));
    let chol = SparseCholesky::new(&reg.build())?;
    let b = q.to_vec();
    let mut p = chol.solve(&b);
    for _ in 0..3 {
        let r: Vec<f64> = spmv(&s, &p).iter().zip(&b).map(|(a, b)| b - a).collect();
        let d = chol.solve(&r);
        p.iter_mut().zip(d).for_each(|(x, d)| *x += d);
    }
    let mut flux = vec![0.0; grid.num_faces()];
    for &(f, m, pp, tr) in &links {
        flux[f] = tr * (p[m] - p[pp]);
    }
    // Correct the fluxes against their own divergence: differences of large
    // pressures lose digits in high-transmissibility faces, the corrections
    // do not.
    for _ in 0..2 {
        let mut r = b.clone();
        for &(f, m, pp, _) in &links {
            r[m] -= flux[f];
            r[pp] += flux[f];
        }
        let d = chol.solve(&r);
        for &(f, m, pp, tr) in &links {
            flux[f] += tr * (d[m] - d[pp]);
        }
        p.iter_mut().zip(d).for_each(|(x, d)| *x += d);
    }
    recenter(&mut p);
    Ok(FineSolution { p, flux: FaceFlux { flux } })
}
