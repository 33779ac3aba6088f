//! Sequential two-phase flow: total-mobility pressure solves in a fixed
//! mortar space, optional Jacobi smoothing of the multiscale velocity, and
//! explicit upwind transport of water saturation.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{MortarError, Result};
use crate::grid::{CellBox, GridHierarchy};
use crate::hybrid::{assemble_all, assemble_fine_hybrid, fine_reference_solve, FaceFlux, FineHybridSystem, SubdomainSystem};
use crate::linalg::diagonal;
use crate::mortar::{edge_totals, extend_trace, multiscale_solve, project_conservative, MortarSpace, MultiscaleSolution};
use crate::online::{enrichment_loop, EnrichmentConfig, OversamplingCase};
use crate::perm::PermField;

static CLAMPED: AtomicU64 = AtomicU64::new(0);

/// Number of saturation values clamped into [0, 1] by [`frac_flow`] so far.
pub fn clamp_count() -> u64 {
    CLAMPED.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxMode {
    /// Power-law relative permeabilities.
    Corey,
    /// `f_w(s) = s` and unit total mobility; for transport tests.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidModel {
    pub mu_w: f64,
    pub mu_o: f64,
    pub n_w: f64,
    pub n_o: f64,
    /// Residual water and oil saturations.
    pub s_wr: f64,
    pub s_or: f64,
    pub rho_w: f64,
    pub mode: FluxMode,
}

impl Default for FluidModel {
    fn default() -> Self {
        FluidModel { mu_w: 1.0, mu_o: 5.0, n_w: 2.0, n_o: 2.0, s_wr: 0.0, s_or: 0.0, rho_w: 1.0, mode: FluxMode::Corey }
    }
}

impl FluidModel {
    pub fn linear() -> Self {
        FluidModel { mode: FluxMode::Linear, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mu_w > 0.0
            && self.mu_o > 0.0
            && self.n_w >= 1.0
            && self.n_o >= 1.0
            && self.s_wr >= 0.0
            && self.s_or >= 0.0
            && self.s_wr + self.s_or < 1.0
            && self.rho_w > 0.0;
        if ok {
            Ok(())
        } else {
            Err(MortarError::Config(format!("invalid fluid model {self:?}")))
        }
    }

    /// `(k_rw, k_ro)` at saturation `s`.
    pub fn rel_perm(&self, s: f64) -> (f64, f64) {
        let se = ((s - self.s_wr) / (1.0 - self.s_wr - self.s_or)).clamp(0.0, 1.0);
        (se.powf(self.n_w), (1.0 - se).powf(self.n_o))
    }

    /// Upper bound on `df_w/ds` over [0, 1], from a fine sampling with a
    /// small safety factor.
    pub fn max_dfw(&self) -> f64 {
        if self.mode == FluxMode::Linear {
            return 1.0;
        }
        let n = 4000;
        let mut m = 0.0f64;
        let mut prev = frac_flow(0.0, self).1;
        for i in 1..=n {
            let f = frac_flow(i as f64 / n as f64, self).1;
            m = m.max((f - prev) * n as f64);
            prev = f;
        }
        1.05 * m
    }
}

/// Total mobility and water fractional flow. Out-of-range saturations are
/// clamped and counted.
pub fn frac_flow(s: f64, fluid: &FluidModel) -> (f64, f64) {
    let s = if (0.0..=1.0).contains(&s) {
        s
    } else {
        CLAMPED.fetch_add(1, Ordering::Relaxed);
        log::warn!("saturation {s} clamped");
        s.clamp(0.0, 1.0)
    };
    match fluid.mode {
        FluxMode::Linear => (1.0, s),
        FluxMode::Corey => {
            let (krw, kro) = fluid.rel_perm(s);
            let lw = krw / fluid.mu_w;
            let lt = lw + kro / fluid.mu_o;
            (lt, lw / lt)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WellKind {
    Injector,
    Producer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Well {
    pub cell: usize,
    /// Volumetric rate, positive for injection.
    pub rate: f64,
    pub kind: WellKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WellSet {
    pub wells: Vec<Well>,
}

impl WellSet {
    pub fn new(wells: Vec<Well>) -> Result<Self> {
        let total: f64 = wells.iter().map(|w| w.rate).sum();
        let scale: f64 = wells.iter().map(|w| w.rate.abs()).sum();
        if scale == 0.0 || total.abs() > 1e-12 * scale {
            return Err(MortarError::Config(format!("well rates must sum to zero, got {total}")));
        }
        for w in &wells {
            let sign_ok = match w.kind {
                WellKind::Injector => w.rate > 0.0,
                WellKind::Producer => w.rate < 0.0,
            };
            if !sign_ok {
                return Err(MortarError::Config(format!("well in cell {} has rate {} of the wrong sign", w.cell, w.rate)));
            }
        }
        Ok(WellSet { wells })
    }

    /// Injectors of `rate` in the four corner cells and one producer of
    /// `-4·rate` in the middle, split over the central 2×2 cells when the
    /// fine grid has even extents.
    pub fn five_spot(grid: &GridHierarchy, rate: f64) -> Result<Self> {
        let f = grid.fine();
        if grid.dim() != 2 || f[0] < 3 || f[1] < 3 {
            return Err(MortarError::Config("five-spot needs a 2D grid of at least 3×3 cells".into()));
        }
        let mut wells: Vec<Well> = [[0, 0], [f[0] - 1, 0], [0, f[1] - 1], [f[0] - 1, f[1] - 1]]
            .iter()
            .map(|&[i, j]| Well { cell: grid.cell_index([i, j, 0]), rate, kind: WellKind::Injector })
            .collect();
        let xs: Vec<usize> = if f[0] % 2 == 0 { vec![f[0] / 2 - 1, f[0] / 2] } else { vec![f[0] / 2] };
        let ys: Vec<usize> = if f[1] % 2 == 0 { vec![f[1] / 2 - 1, f[1] / 2] } else { vec![f[1] / 2] };
        let share = -4.0 * rate / (xs.len() * ys.len()) as f64;
        for &j in &ys {
            for &i in &xs {
                wells.push(Well { cell: grid.cell_index([i, j, 0]), rate: share, kind: WellKind::Producer });
            }
        }
        WellSet::new(wells)
    }

    /// Cell source vector (integrated rates).
    pub fn source(&self, grid: &GridHierarchy) -> Vec<f64> {
        let mut q = vec![0.0; grid.num_cells()];
        for w in &self.wells {
            q[w.cell] += w.rate;
        }
        q
    }

    /// Rate-weighted fractional flow over the producers.
    pub fn water_cut(&self, s: &[f64], fluid: &FluidModel) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for w in self.wells.iter().filter(|w| w.kind == WellKind::Producer) {
            num += frac_flow(s[w.cell], fluid).1 * w.rate.abs();
            den += w.rate.abs();
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseState {
    pub s: Vec<f64>,
    pub time: f64,
    pub step: usize,
}

impl TwoPhaseState {
    pub fn new(grid: &GridHierarchy, s0: f64) -> Self {
        TwoPhaseState { s: vec![s0; grid.num_cells()], time: 0.0, step: 0 }
    }
}

/// Cell-wise total mobility.
pub fn mobility(s: &[f64], fluid: &FluidModel) -> Vec<f64> {
    s.iter().map(|&v| frac_flow(v, fluid).0).collect()
}

/// Multiscale pressure solve with coefficient `λ(s)·κ` in a fixed space.
/// Returns the solution together with the subdomain systems it used.
pub fn pressure_step(
    grid: &GridHierarchy,
    perm: &PermField,
    fluid: &FluidModel,
    space: &MortarSpace,
    s: &[f64],
    wells: &WellSet,
) -> Result<(MultiscaleSolution, Vec<SubdomainSystem>, PermField)> {
    let mperm = perm.scaled(&mobility(s, fluid))?;
    let systems = assemble_all(grid, &mperm)?;
    let sol = multiscale_solve(grid, space, &systems, &wells.source(grid))?;
    Ok((sol, systems, mperm))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobiConfig {
    pub iters: usize,
    pub damping: f64,
}

impl Default for JacobiConfig {
    fn default() -> Self {
        JacobiConfig { iters: 10, damping: 2.0 / 3.0 }
    }
}

/// Damped Jacobi on a fine hybrid system from the initial guess `x`.
/// Returns the iterate and the `D⁻¹`-weighted residual norms before each
/// iteration and after the last.
pub fn jacobi_smooth(sys: &FineHybridSystem, mut x: Vec<f64>, cfg: JacobiConfig) -> (Vec<f64>, Vec<f64>) {
    let d = diagonal(sys.matrix());
    let mut history = Vec::with_capacity(cfg.iters + 1);
    let weighted = |r: &[f64]| r.iter().zip(&d).map(|(r, d)| r * r / d).sum::<f64>().sqrt();
    for it in 0..=cfg.iters {
        let ax = sys.apply(&x);
        let r: Vec<f64> = sys.load().iter().zip(&ax).map(|(g, a)| g - a).collect();
        history.push(weighted(&r));
        if it == cfg.iters {
            break;
        }
        for ((xi, ri), di) in x.iter_mut().zip(&r).zip(&d) {
            *xi += cfg.damping * ri / di;
        }
    }
    (x, history)
}

/// Conservative fine velocity from a multiscale solution, optionally after
/// Jacobi smoothing of its fine traces. Smoothed skeleton values are mapped
/// back through the block solves; edge totals are kept from the multiscale
/// solution so every block stays balanced.
pub fn multiscale_velocity(
    grid: &GridHierarchy,
    mperm: &PermField,
    systems: &[SubdomainSystem],
    sol: &MultiscaleSolution,
    q: &[f64],
    smoothing: Option<JacobiConfig>,
) -> Result<FaceFlux> {
    let Some(cfg) = smoothing else {
        return project_conservative(grid, systems, &sol.lambda, q, None);
    };
    let global = assemble_fine_hybrid(grid, mperm, CellBox::new([0; 3], grid.fine()), Some(q))?;
    let xi = extend_trace(grid, systems, &sol.lambda, Some(q))?;
    let (x, _) = jacobi_smooth(&global, global.gather(&xi), cfg);
    let mut lam = vec![0.0; grid.num_skeleton_faces()];
    for s in 0..grid.skeleton_edges().len() {
        let e = grid.edge(grid.skeleton_edges()[s]);
        let start = grid.skeleton_range(s).start;
        for (k, &f) in e.faces.iter().enumerate() {
            lam[start + k] = x[global.position(f).expect("skeleton face is an unknown")];
        }
    }
    let targets = edge_totals(grid, systems, &sol.lambda, q)?;
    project_conservative(grid, systems, &lam, q, Some(&targets))
}

/// Largest per-cell imbalance of a face flux against the source, relative to
/// the largest flux or source magnitude.
pub fn imbalance(grid: &GridHierarchy, flux: &FaceFlux, q: &[f64]) -> (usize, f64) {
    let cf = flux.to_cell_fluxes(grid);
    let scale = flux.flux.iter().chain(q).fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let mut worst = (0, 0.0);
    for (c, &qc) in q.iter().enumerate() {
        let v = (cf.net_outflow(c) - qc).abs() / scale;
        if v > worst.1 {
            worst = (c, v);
        }
    }
    worst
}

/// Outcome of one transport step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TransportReport {
    pub substeps: usize,
    /// Change of water volume `Σ φ V s`.
    pub water_change: f64,
    pub injected: f64,
    pub produced: f64,
    /// `|Δ water − (injected − produced)|` relative to the step's throughput.
    pub balance_error: f64,
    /// Water volume removed or added by clipping to [0, 1].
    pub clipped: f64,
}

/// Explicit first-order upwind update over `dt` with CFL-limited sub-steps.
pub fn transport_step(
    state: &mut TwoPhaseState,
    flux: &FaceFlux,
    wells: &WellSet,
    dt: f64,
    grid: &GridHierarchy,
    perm: &PermField,
    fluid: &FluidModel,
) -> Result<TransportReport> {
    if !(dt > 0.0) {
        return Err(MortarError::InvalidValue { index: 0, value: dt });
    }
    let q = wells.source(grid);
    let (cell, imb) = imbalance(grid, flux, &q);
    if imb > 1e-8 {
        return Err(MortarError::NonConservative { cell, imbalance: imb });
    }
    let vol = grid.cell_volume();
    let phi = perm.phi();
    let nc = grid.num_cells();
    let faces: Vec<Vec<(usize, f64)>> = (0..nc).into_par_iter().map(|c| grid.cell_faces(c)).collect();
    let producer: Vec<f64> = {
        let mut v = vec![0.0; nc];
        for w in wells.wells.iter().filter(|w| w.kind == WellKind::Producer) {
            v[w.cell] += -w.rate;
        }
        v
    };
    let injector: Vec<f64> = {
        let mut v = vec![0.0; nc];
        for w in wells.wells.iter().filter(|w| w.kind == WellKind::Injector) {
            v[w.cell] += w.rate;
        }
        v
    };
    let throughput: Vec<f64> = (0..nc)
        .map(|c| faces[c].iter().map(|&(f, sign)| (sign * flux.flux[f]).max(0.0)).sum::<f64>() + producer[c])
        .collect();
    let cfl_rate = (0..nc).map(|c| throughput[c] / (phi[c] * vol)).fold(0.0, f64::max) * fluid.max_dfw();
    let substeps = if cfl_rate > 0.0 { ((dt * cfl_rate / 0.9).ceil() as usize).max(1) } else { 1 };
    let h = dt / substeps as f64;
    let water = |s: &[f64]| s.iter().zip(phi).map(|(s, p)| s * p * vol).sum::<f64>();
    let w0 = water(&state.s);
    let mut rep = TransportReport { substeps, ..Default::default() };
    let mut exchange = 0.0;
    for _ in 0..substeps {
        let fw: Vec<f64> = state.s.iter().map(|&s| frac_flow(s, fluid).1).collect();
        let s_old = &state.s;
        let next: Vec<(f64, f64, f64)> = (0..nc)
            .into_par_iter()
            .map(|c| {
                let mut out = 0.0;
                for &(f, sign) in &faces[c] {
                    let fl = sign * flux.flux[f];
                    if fl == 0.0 {
                        continue;
                    }
                    let (m, p) = grid.face_cells(f);
                    let other = if m == Some(c) { p } else { m }.expect("flux through a boundary face");
                    out += fl * if fl > 0.0 { fw[c] } else { fw[other] };
                }
                let prod = producer[c] * fw[c];
                let rhs = injector[c] - prod - out;
                (s_old[c] + h * rhs / (phi[c] * vol), injector[c], prod)
            })
            .collect();
        let mut s_new = Vec::with_capacity(nc);
        for (c, (s, inj, prod)) in next.into_iter().enumerate() {
            rep.injected += h * inj;
            rep.produced += h * prod;
            exchange += h * (inj - prod);
            let clipped = s.clamp(0.0, 1.0);
            rep.clipped += (clipped - s) * phi[c] * vol;
            s_new.push(clipped);
        }
        state.s = s_new;
    }
    rep.water_change = water(&state.s) - w0;
    let scale = (rep.injected + rep.produced).max(rep.water_change.abs()).max(f64::MIN_POSITIVE);
    rep.balance_error = (rep.water_change - rep.clipped - exchange).abs() / scale;
    state.time += dt;
    state.step += 1;
    Ok(rep)
}

/// How pressure is solved at each step.
#[derive(Debug, Clone, PartialEq)]
pub enum PressureSolver {
    /// Monolithic fine solve.
    Reference,
    Multiscale { space: MortarSpace, smoothing: Option<JacobiConfig> },
}

impl PressureSolver {
    /// Velocity field for the current saturation.
    pub fn velocity(&self, grid: &GridHierarchy, perm: &PermField, fluid: &FluidModel, s: &[f64], wells: &WellSet) -> Result<FaceFlux> {
        let q = wells.source(grid);
        match self {
            PressureSolver::Reference => {
                let mperm = perm.scaled(&mobility(s, fluid))?;
                Ok(fine_reference_solve(grid, &mperm, &q)?.flux)
            }
            PressureSolver::Multiscale { space, smoothing } => {
                let (sol, systems, mperm) = pressure_step(grid, perm, fluid, space, s, wells)?;
                multiscale_velocity(grid, &mperm, &systems, &sol, &q, *smoothing)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeConfig {
    pub dt: f64,
    pub steps: usize,
    /// Report every `stride` steps (and at step 0).
    pub stride: usize,
    pub s0: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig { dt: 1.0, steps: 2500, stride: 50, s0: 0.0 }
    }
}

impl TimeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || self.stride == 0 || !(0.0..=1.0).contains(&self.s0) {
            return Err(MortarError::Config(format!("invalid time stepping {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportPoint {
    pub step: usize,
    pub time: f64,
    pub water_cut: f64,
    pub s: Vec<f64>,
}

/// One simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub reports: Vec<ReportPoint>,
    /// Worst per-step water balance error.
    pub max_balance_error: f64,
    /// Worst per-cell flux imbalance over all pressure solves.
    pub max_imbalance: f64,
    pub max_clipped: f64,
    pub final_state: TwoPhaseState,
}

/// Sequential pressure–transport loop.
pub fn simulate(
    grid: &GridHierarchy,
    perm: &PermField,
    fluid: &FluidModel,
    wells: &WellSet,
    solver: &PressureSolver,
    time: &TimeConfig,
) -> Result<Trajectory> {
    fluid.validate()?;
    time.validate()?;
    let q = wells.source(grid);
    let mut state = TwoPhaseState::new(grid, time.s0);
    let report = |st: &TwoPhaseState| ReportPoint { step: st.step, time: st.time, water_cut: wells.water_cut(&st.s, fluid), s: st.s.clone() };
    let mut traj = Trajectory {
        reports: vec![report(&state)],
        max_balance_error: 0.0,
        max_imbalance: 0.0,
        max_clipped: 0.0,
        final_state: state.clone(),
    };
    for _ in 0..time.steps {
        let flux = solver.velocity(grid, perm, fluid, &state.s, wells)?;
        traj.max_imbalance = traj.max_imbalance.max(imbalance(grid, &flux, &q).1);
        let rep = transport_step(&mut state, &flux, wells, time.dt, grid, perm, fluid)?;
        traj.max_balance_error = traj.max_balance_error.max(rep.balance_error);
        traj.max_clipped = traj.max_clipped.max(rep.clipped.abs());
        if state.step % time.stride == 0 {
            traj.reports.push(report(&state));
        }
    }
    traj.final_state = state;
    Ok(traj)
}

/// Relative L2 saturation error; zero when both fields vanish.
pub fn saturation_error(s: &[f64], s_ref: &[f64]) -> f64 {
    let num: f64 = s.iter().zip(s_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = s_ref.iter().map(|v| v * v).sum();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (num / den).sqrt()
    }
}

/// One row of the two-phase time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub step: usize,
    pub time: f64,
    pub watercut_ms: f64,
    pub watercut_ref: f64,
    pub e_s: f64,
}

pub fn compare(run: &Trajectory, reference: &Trajectory) -> Vec<SeriesRow> {
    run.reports
        .iter()
        .zip(&reference.reports)
        .map(|(a, b)| SeriesRow { step: a.step, time: a.time, watercut_ms: a.water_cut, watercut_ref: b.water_cut, e_s: saturation_error(&a.s, &b.s) })
        .collect()
}

/// Mortar space built at the initial saturation: `offline` polynomial
/// vectors per edge plus `online` enrichment levels.
pub fn initial_space(
    grid: &GridHierarchy,
    perm: &PermField,
    fluid: &FluidModel,
    wells: &WellSet,
    s0: f64,
    offline: usize,
    online: usize,
    case: OversamplingCase,
) -> Result<MortarSpace> {
    let mperm = perm.scaled(&mobility(&vec![s0; grid.num_cells()], fluid))?;
    let cfg = EnrichmentConfig { levels: online, offline, case, ..Default::default() };
    Ok(enrichment_loop(grid, &mperm, &wells.source(grid), &cfg)?.space)
}

/// A labelled pressure solver for [`run_twophase`].
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub solver: PressureSolver,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseResult {
    pub reference: Trajectory,
    pub runs: Vec<(String, Trajectory, Vec<SeriesRow>)>,
}

/// Reference run plus one run per variant, each compared to the reference.
pub fn run_twophase(
    grid: &GridHierarchy,
    perm: &PermField,
    fluid: &FluidModel,
    wells: &WellSet,
    variants: &[Variant],
    time: &TimeConfig,
) -> Result<TwoPhaseResult> {
    let reference = simulate(grid, perm, fluid, wells, &PressureSolver::Reference, time)?;
    let runs = variants
        .iter()
        .map(|v| {
            let t = simulate(grid, perm, fluid, wells, &v.solver, time)?;
            let rows = compare(&t, &reference);
            Ok((v.label.clone(), t, rows))
        })
        .collect::<Result<_>>()?;
    Ok(TwoPhaseResult { reference, runs })
}
