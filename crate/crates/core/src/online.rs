//! Residual-driven online enrichment of the mortar space.
//!
//! Each level solves the coarse problem, measures the skeleton residual, and
//! adds one candidate per interior edge: either the local problem on the
//! edge's skeleton faces (operator = diagonal block of the skeleton operator,
//! zero on the rest of the two blocks' boundaries) or the fine hybrid problem
//! on an oversampled box restricted back to the edge.

use faer::Mat;
use rayon::prelude::*;

use crate::error::{MortarError, Result};
use crate::grid::{color_classes, CellBox, oversample_region, DMatrix, GridHierarchy};
use crate::hybrid::{assemble_all, assemble_fine_hybrid, fine_reference_solve, CellFluxes, FineHybridSystem, FineSolution, SubdomainSystem};
use crate::linalg::{dot, SymmetricSolver};
use crate::mortar::{
    assemble_interface, assemble_skeleton, dual_norm_sq, energy_sq, errors, extend_trace, offline_basis, orthonormalize,
    recover_solution, residual_on_skeleton, solve_interface, MortarSpace, MultiscaleSolution, SkeletonOperator,
};
use crate::perm::PermField;

/// Which local problem produces the online candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OversamplingCase {
    /// Edge-local problem on the skeleton.
    Local,
    /// Fine hybrid problem on the two-block neighborhood.
    Case1,
    /// Neighborhood plus one fine cell past each edge endpoint.
    CaseA,
    /// Half-block depth plus one fine cell past each endpoint.
    CaseB,
    Explicit(DMatrix),
}

impl OversamplingCase {
    /// d-values for an edge normal to `axis`.
    pub fn dmatrix(&self, grid: &GridHierarchy, axis: usize) -> Option<DMatrix> {
        let n = grid.n()[axis];
        let (perp, tang) = match self {
            OversamplingCase::Local => return None,
            OversamplingCase::Case1 => (n, 0),
            OversamplingCase::CaseA => (n, 1),
            OversamplingCase::CaseB => ((n / 2).max(1), 1),
            OversamplingCase::Explicit(d) => return Some(*d),
        };
        Some(DMatrix::new(perp, tang, tang, perp))
    }

    pub fn label(&self) -> &'static str {
        match self {
            OversamplingCase::Local => "local",
            OversamplingCase::Case1 => "1",
            OversamplingCase::CaseA => "a",
            OversamplingCase::CaseB => "b",
            OversamplingCase::Explicit(_) => "explicit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentConfig {
    /// Enrichment levels after the offline solve.
    pub levels: usize,
    /// Offline polynomials per edge.
    pub offline: usize,
    pub case: OversamplingCase,
    /// Stop once the residual dual norm falls below this fraction of its
    /// initial value (0 disables).
    pub stop_residual: f64,
    /// Relative norm below which an orthogonalized candidate is dropped.
    pub drop_tol: f64,
    /// Refresh the residual after each color group instead of once per level.
    pub gauss_seidel: bool,
}

impl Default for EnrichmentConfig {
    fn default() -> Self {
        EnrichmentConfig { levels: 6, offline: 1, case: OversamplingCase::Local, stop_residual: 0.0, drop_tol: 1e-10, gauss_seidel: false }
    }
}

impl EnrichmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.offline == 0 {
            return Err(MortarError::Config("offline count must be at least 1".into()));
        }
        if !(self.drop_tol > 0.0) || self.stop_residual < 0.0 {
            return Err(MortarError::Config("thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one enrichment level, before its enrichment.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub dof: usize,
    /// Largest basis count over edges.
    pub nb: usize,
    pub e_p: f64,
    pub e_u: f64,
    /// Squared skeleton-operator seminorm of the error against the full
    /// skeleton solution.
    pub energy_sq: f64,
    /// Sum of squared residual dual norms over each color group.
    pub group_dual_sq: Vec<f64>,
    /// Sum of residual dual norms over all edges.
    pub dual_sum: f64,
    /// Candidates kept after this level's enrichment.
    pub added: usize,
    /// Worst per-cell flux imbalance of the recovered solution.
    pub conservation: f64,
}

#[derive(Debug, Clone)]
pub struct EnrichmentHistory {
    pub records: Vec<LevelRecord>,
    pub space: MortarSpace,
    pub solution: MultiscaleSolution,
}

/// Precomputed operators shared by all levels for one field and source.
pub struct OnlineContext<'a> {
    pub grid: &'a GridHierarchy,
    pub perm: &'a PermField,
    pub q: Vec<f64>,
    pub systems: Vec<SubdomainSystem>,
    pub skeleton: SkeletonOperator,
    pub edge_solvers: Vec<SymmetricSolver>,
    /// Per-edge inner products used to orthonormalize bases.
    pub edge_ip: Vec<Mat<f64>>,
    pub groups: Vec<Vec<usize>>,
    pub reference: FineSolution,
    pub reference_flux: CellFluxes,
    /// Full skeleton solution.
    pub lambda_f: Vec<f64>,
}

impl<'a> OnlineContext<'a> {
    pub fn new(grid: &'a GridHierarchy, perm: &'a PermField, q: &[f64]) -> Result<Self> {
        let systems = assemble_all(grid, perm)?;
        let skeleton = assemble_skeleton(grid, &systems, q)?;
        let edge_solvers = skeleton.edge_blocks.par_iter().map(|d| SymmetricSolver::new(d.as_ref())).collect();
        let edge_ip = grid
            .skeleton_edges()
            .iter()
            .zip(&skeleton.edge_blocks)
            .map(|(&e, d)| {
                let area = grid.face_area(grid.edge(e).axis);
                let m = d.nrows();
                let tr: f64 = (0..m).map(|i| d[(i, i)]).sum();
                let eps = 1e-8 * tr / (area * m as f64);
                Mat::from_fn(m, m, |i, j| d[(i, j)] + if i == j { eps * area } else { 0.0 })
            })
            .collect();
        let groups = color_classes(grid).into_iter().map(|g| g.into_iter().map(|e| grid.edge(e).skeleton.unwrap()).collect()).collect();
        let reference = fine_reference_solve(grid, perm, q)?;
        let reference_flux = reference.cell_fluxes(grid);
        let lambda_f = skeleton.solve()?;
        Ok(OnlineContext { grid, perm, q: q.to_vec(), systems, skeleton, edge_solvers, edge_ip, groups, reference, reference_flux, lambda_f })
    }

    /// Offline space orthonormalized in the per-edge inner products.
    pub fn offline_space(&self, k: usize) -> Result<MortarSpace> {
        let base = offline_basis(self.grid, k)?;
        let edges: Vec<Vec<Vec<f64>>> =
            base.edges.into_iter().zip(&self.edge_ip).map(|(b, g)| orthonormalize(&[], b, Some(g), 1e-10)).collect();
        let offline = edges.iter().map(Vec::len).collect();
        Ok(MortarSpace { edges, offline })
    }

    pub fn solve(&self, space: &MortarSpace) -> Result<MultiscaleSolution> {
        let op = assemble_interface(self.grid, space, &self.systems, &self.q)?;
        let c = solve_interface(&op)?;
        recover_solution(self.grid, &self.systems, &space.prolong(self.grid, &c), &self.q)
    }

    pub fn residual(&self, lam: &[f64]) -> Result<Vec<f64>> {
        residual_on_skeleton(self.grid, &self.systems, lam, &self.q)
    }

    /// Squared seminorm of `λ_f − λ` (constant component removed).
    pub fn error_energy_sq(&self, lam: &[f64]) -> Result<f64> {
        let mut e: Vec<f64> = self.lambda_f.iter().zip(lam).map(|(a, b)| a - b).collect();
        crate::hybrid::recenter(&mut e);
        energy_sq(&self.systems, &e)
    }

    pub fn edge_residual<'r>(&self, r: &'r [f64], s: usize) -> &'r [f64] {
        &r[self.grid.skeleton_range(s)]
    }

    /// Region systems for an oversampling case, factorized.
    pub fn region_solvers(&self, case: OversamplingCase) -> Result<Vec<RegionSolver>> {
        self.grid
            .skeleton_edges()
            .par_iter()
            .map(|&e| {
                let d = case
                    .dmatrix(self.grid, self.grid.edge(e).axis)
                    .ok_or_else(|| MortarError::Config("local case has no region".into()))?;
                let region = oversample_region(self.grid, e, &d)?;
                let mut sys = assemble_fine_hybrid(self.grid, self.perm, region.cells, None)?;
                sys.factorize()?;
                let edge_pos = self.grid.edge(e).faces.iter().map(|&f| sys.position(f).expect("edge inside its region")).collect();
                Ok(RegionSolver { sys, edge_pos })
            })
            .collect()
    }
}

/// Factorized fine hybrid system on one oversampled region.
pub struct RegionSolver {
    pub sys: FineHybridSystem,
    /// Positions of the edge's faces among the region unknowns.
    pub edge_pos: Vec<usize>,
}

/// Local candidate `D⁻¹ r`, normalized in `D`. `None` for a zero residual.
pub fn online_basis_local(solver: &SymmetricSolver, residual: &[f64]) -> Option<Vec<f64>> {
    let mu = solver.solve(residual);
    let nrm = dot(residual, &mu);
    if !(nrm > 0.0) || !nrm.is_finite() {
        return None;
    }
    let s = nrm.sqrt();
    Some(mu.into_iter().map(|v| v / s).collect())
}

/// Oversampled candidate: solve the region problem loaded with the global
/// fine residual `r_h` (indexed like `global`'s unknowns) and restrict to the
/// edge. `None` if the restriction vanishes.
pub fn online_basis_oversampled(region: &RegionSolver, global: &FineHybridSystem, r_h: &[f64]) -> Result<Option<Vec<f64>>> {
    let rhs: Vec<f64> = region.sys.faces().iter().map(|&f| global.position(f).map_or(0.0, |i| r_h[i])).collect();
    if rhs.iter().all(|&v| v == 0.0) {
        return Ok(None);
    }
    let x = region.sys.solve(&rhs)?;
    let mu: Vec<f64> = region.edge_pos.iter().map(|&i| x[i]).collect();
    let n = dot(&mu, &mu).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Ok(None);
    }
    Ok(Some(mu.into_iter().map(|v| v / n).collect()))
}

/// Add candidates to their edges after orthogonalization; returns the count kept.
pub fn enrich_space(space: &mut MortarSpace, candidates: Vec<(usize, Vec<f64>)>, edge_ip: &[Mat<f64>], drop_tol: f64) -> usize {
    let mut kept = 0;
    for (s, mu) in candidates {
        let new = orthonormalize(&space.edges[s], vec![mu], Some(&edge_ip[s]), drop_tol);
        kept += new.len();
        space.edges[s].extend(new);
    }
    kept
}

struct Oversampler {
    regions: Vec<RegionSolver>,
    global: FineHybridSystem,
}

fn candidates(
    ctx: &OnlineContext,
    over: Option<&Oversampler>,
    edges: &[usize],
    sol: &MultiscaleSolution,
    r: &[f64],
) -> Result<Vec<(usize, Vec<f64>)>> {
    let found: Vec<Option<(usize, Vec<f64>)>> = match over {
        None => edges.par_iter().map(|&s| online_basis_local(&ctx.edge_solvers[s], ctx.edge_residual(r, s)).map(|m| (s, m))).collect(),
        Some(o) => {
            // Traces of the recovered multiscale solution, source included, so
            // the fine residual vanishes inside blocks.
            let xi = extend_trace(ctx.grid, &ctx.systems, &sol.lambda, Some(&ctx.q))?;
            let r_h = o.global.residual(&xi);
            edges
                .par_iter()
                .map(|&s| Ok(online_basis_oversampled(&o.regions[s], &o.global, &r_h)?.map(|m| (s, m))))
                .collect::<Result<_>>()?
        }
    };
    Ok(found.into_iter().flatten().collect())
}

fn record(ctx: &OnlineContext, space: &MortarSpace, sol: &MultiscaleSolution, r: &[f64], level: usize) -> Result<LevelRecord> {
    let (e_p, e_u) = errors(ctx.grid, ctx.perm, &sol.p, &sol.flux, &ctx.reference.p, &ctx.reference_flux)?;
    let duals: Vec<f64> = (0..ctx.edge_solvers.len()).map(|s| dual_norm_sq(&ctx.edge_solvers[s], ctx.edge_residual(r, s))).collect();
    Ok(LevelRecord {
        level,
        dof: space.dof(),
        nb: space.max_basis(),
        e_p,
        e_u,
        energy_sq: ctx.error_energy_sq(&sol.lambda)?,
        group_dual_sq: ctx.groups.iter().map(|g| g.iter().map(|&s| duals[s]).sum()).collect(),
        dual_sum: duals.iter().map(|d| d.sqrt()).sum(),
        added: 0,
        conservation: sol.flux.conservation_error(&ctx.q),
    })
}

/// Run the online loop from the offline space.
pub fn enrichment_loop(grid: &GridHierarchy, perm: &PermField, q: &[f64], cfg: &EnrichmentConfig) -> Result<EnrichmentHistory> {
    let ctx = OnlineContext::new(grid, perm, q)?;
    run_enrichment(&ctx, cfg)
}

pub fn run_enrichment(ctx: &OnlineContext, cfg: &EnrichmentConfig) -> Result<EnrichmentHistory> {
    cfg.validate()?;
    let over = match cfg.case {
        OversamplingCase::Local => None,
        case => {
            let global = assemble_fine_hybrid(ctx.grid, ctx.perm, CellBox::new([0; 3], ctx.grid.fine()), Some(&ctx.q))?;
            Some(Oversampler { regions: ctx.region_solvers(case)?, global })
        }
    };
    let mut space = ctx.offline_space(cfg.offline)?;
    let mut sol = ctx.solve(&space)?;
    let mut r = ctx.residual(&sol.lambda)?;
    let mut records = Vec::new();
    let all: Vec<usize> = (0..ctx.edge_solvers.len()).collect();
    let mut r0 = None;
    for level in 0..=cfg.levels {
        let mut rec = record(ctx, &space, &sol, &r, level)?;
        let total: f64 = rec.group_dual_sq.iter().sum::<f64>().sqrt();
        let r0v = *r0.get_or_insert(total);
        log::info!("level {level}: dof {} e_p {:.3e} e_u {:.3e}", rec.dof, rec.e_p, rec.e_u);
        let stop = level == cfg.levels || (cfg.stop_residual > 0.0 && total <= cfg.stop_residual * r0v);
        if stop {
            records.push(rec);
            break;
        }
        let mut added = 0;
        if cfg.gauss_seidel {
            for g in &ctx.groups {
                let c = candidates(ctx, over.as_ref(), g, &sol, &r)?;
                added += enrich_space(&mut space, c, &ctx.edge_ip, cfg.drop_tol);
                sol = ctx.solve(&space)?;
                r = ctx.residual(&sol.lambda)?;
            }
        } else {
            let c = candidates(ctx, over.as_ref(), &all, &sol, &r)?;
            added = enrich_space(&mut space, c, &ctx.edge_ip, cfg.drop_tol);
            if added > 0 {
                sol = ctx.solve(&space)?;
                r = ctx.residual(&sol.lambda)?;
            }
        }
        rec.added = added;
        records.push(rec);
        if added == 0 {
            break;
        }
    }
    sol.level = records.len() - 1;
    Ok(EnrichmentHistory { records, space, solution: sol })
}

/// Empirical checks of the contraction bound and the a-posteriori constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub strictly_decreasing: bool,
    pub monotone: bool,
    /// Per transition `l → l+1`: `‖e^l‖² − ‖e^{l+1}‖² − max_g Σ_g ‖R‖²_* + tol·‖e^l‖²`.
    pub contraction_margin: Vec<f64>,
    pub contraction_holds: bool,
    /// Smallest C with `‖e^l‖ ≤ C·Σ‖R‖_*` over recorded levels.
    pub measured_c: f64,
}

pub fn convergence_diagnostics(history: &EnrichmentHistory, tol: f64) -> Diagnostics {
    let recs = &history.records;
    let mut margins = Vec::new();
    let mut strict = true;
    let mut mono = true;
    for w in recs.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        strict &= b.energy_sq < a.energy_sq;
        mono &= b.energy_sq <= a.energy_sq;
        let worst = a.group_dual_sq.iter().copied().fold(0.0, f64::max);
        margins.push(a.energy_sq - b.energy_sq - worst + tol * a.energy_sq);
    }
    let measured_c = recs.iter().filter(|r| r.dual_sum > 0.0).map(|r| r.energy_sq.sqrt() / r.dual_sum).fold(0.0, f64::max);
    Diagnostics {
        strictly_decreasing: strict,
        monotone: mono,
        contraction_holds: margins.iter().all(|&m| m >= 0.0),
        contraction_margin: margins,
        measured_c,
    }
}
