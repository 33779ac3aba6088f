//! Experiment drivers behind the subcommands.

use std::fs;
use std::path::Path;

use mortar_core::mortar::MortarSpace;
use mortar_core::online::{convergence_diagnostics, Diagnostics};
use mortar_core::perm::{self, load_raw_field, write_raw_field, FieldRecipe, Layout};
use mortar_core::twophase::{
    compare, initial_space, mobility, multiscale_velocity, pressure_step, simulate, JacobiConfig, SeriesRow, Trajectory,
};
use mortar_core::{
    build_grids, corner_sources, fine_reference_solve, run_enrichment, CellFluxes, EnrichmentConfig, EnrichmentHistory, GridHierarchy,
    OnlineContext, PermField, PressureSolver, WellSet,
};

use crate::config::{parse_case, ExperimentConfig, FileLayout, PermConfig, VariantSpec};
use crate::error::CliError;
use crate::output::{cell_velocity, num, write_csv, VtkData};

pub const CONVERGE_CSV: &str = "converge.csv";
pub const DIAGNOSTICS_CSV: &str = "converge_diagnostics.csv";
pub const SWEEP_CSV: &str = "contrast_sweep.csv";
pub const SERIES_HEADER: [&str; 5] = ["step", "time", "watercut_ms", "watercut_ref", "e_s"];

pub fn build_grid(cfg: &ExperimentConfig) -> Result<GridHierarchy, CliError> {
    build_grids(&cfg.grid.extents, &cfg.grid.coarse, &cfg.grid.fine).map_err(CliError::setup)
}

/// Permeability from the config; `contrast` replaces the feature value of
/// model1-like and recipe fields.
pub fn build_perm(cfg: &ExperimentConfig, grid: &GridHierarchy, contrast: Option<f64>) -> Result<PermField, CliError> {
    let field = match &cfg.perm {
        PermConfig::Model1 { contrast: c } => perm::model1_like(grid, cfg.seed, contrast.unwrap_or(*c)),
        PermConfig::Recipe { path } => {
            let mut r = FieldRecipe::load(path).map_err(CliError::setup)?;
            if let Some(c) = contrast {
                r.contrast = c;
            }
            r.build(grid)
        }
        _ if contrast.is_some() => return Err(CliError::Config("perm: a contrast sweep needs a model1 or recipe field".into())),
        PermConfig::LogUniform { lo, hi } => perm::log_uniform(grid, *lo, *hi, cfg.seed),
        PermConfig::Constant { value } => Ok(PermField::constant(grid, *value)),
        PermConfig::File { path, layout, dims, layers } => {
            let layout = match layout {
                FileLayout::Ascii => Layout::Ascii,
                FileLayout::Binary => Layout::BinaryLe,
            };
            load_raw_field(path, dims.unwrap_or(grid.fine()), layout, layers.map(|[a, b]| a..b))
        }
    }
    .map_err(CliError::setup)?;
    field.check_grid(grid).map_err(CliError::setup)?;
    Ok(field)
}

/// Enrichment histories per case, sharing one context.
#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub cases: Vec<String>,
    pub runs: Vec<EnrichmentHistory>,
}

pub fn run_convergence(grid: &GridHierarchy, perm: &PermField, q: &[f64], cfg: &ExperimentConfig) -> Result<ConvergenceTable, CliError> {
    let c = &cfg.converge;
    let ctx = OnlineContext::new(grid, perm, q)?;
    let mut runs = Vec::new();
    for name in &c.cases {
        let case = parse_case(name).map_err(CliError::Config)?;
        let ec = EnrichmentConfig {
            levels: c.levels,
            offline: c.offline,
            case,
            stop_residual: c.stop_residual,
            gauss_seidel: c.gauss_seidel,
            ..EnrichmentConfig::default()
        };
        runs.push(run_enrichment(&ctx, &ec)?);
    }
    Ok(ConvergenceTable { cases: c.cases.clone(), runs })
}

impl ConvergenceTable {
    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["level".to_string(), "Nb".into(), "dof".into()];
        for c in &self.cases {
            h.push(format!("e_p_{c}"));
            h.push(format!("e_u_{c}"));
        }
        h
    }

    /// One row per level; cases that stopped early leave empty cells.
    pub fn rows(&self) -> Vec<Vec<String>> {
        let n = self.runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
        (0..n)
            .map(|l| {
                let first = self.runs.iter().find_map(|r| r.records.get(l)).expect("some run has this level");
                let mut row = vec![l.to_string(), first.nb.to_string(), first.dof.to_string()];
                for r in &self.runs {
                    match r.records.get(l) {
                        Some(rec) => {
                            row.push(num(rec.e_p));
                            row.push(num(rec.e_u));
                        }
                        None => row.extend([String::new(), String::new()]),
                    }
                }
                row
            })
            .collect()
    }

    pub fn diagnostics(&self) -> Vec<Diagnostics> {
        self.runs.iter().map(|h| convergence_diagnostics(h, 1e-8)).collect()
    }

    pub fn diagnostics_rows(&self) -> Vec<Vec<String>> {
        self.cases
            .iter()
            .zip(&self.runs)
            .zip(self.diagnostics())
            .map(|((c, h), d)| {
                let cons = h.records.iter().map(|r| r.conservation).fold(0.0, f64::max);
                let margin = d.contraction_margin.iter().copied().fold(f64::INFINITY, f64::min);
                vec![
                    c.clone(),
                    h.records.len().to_string(),
                    d.strictly_decreasing.to_string(),
                    d.contraction_holds.to_string(),
                    num(if margin.is_finite() { margin } else { 0.0 }),
                    num(d.measured_c),
                    num(cons),
                ]
            })
            .collect()
    }

    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), CliError> {
        let h = self.header();
        let hr: Vec<&str> = h.iter().map(String::as_str).collect();
        write_csv(&dir.join(format!("{stem}.csv")), &hr, &self.rows())?;
        write_csv(
            &dir.join(format!("{stem}_diagnostics.csv")),
            &["case", "levels", "strictly_decreasing", "contraction_holds", "min_margin", "measured_c", "max_imbalance"],
            &self.diagnostics_rows(),
        )
    }
}

/// First level whose e_u is at or below `target`.
pub fn levels_to(history: &EnrichmentHistory, target: f64) -> Option<usize> {
    history.records.iter().position(|r| r.e_u <= target)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub contrast: f64,
    pub case: String,
    pub levels: Option<usize>,
    pub measured_c: f64,
    pub final_e_u: f64,
}

pub fn run_contrast_sweep(cfg: &ExperimentConfig, grid: &GridHierarchy, q: &[f64], dir: Option<&Path>) -> Result<Vec<SweepRow>, CliError> {
    let mut out = Vec::new();
    for &eta in &cfg.converge.contrasts {
        let perm = build_perm(cfg, grid, Some(eta))?;
        let table = run_convergence(grid, &perm, q, cfg)?;
        if let Some(d) = dir {
            table.write(d, &format!("converge_eta_{}", num(eta)))?;
        }
        for ((case, h), diag) in table.cases.iter().zip(&table.runs).zip(table.diagnostics()) {
            out.push(SweepRow {
                contrast: eta,
                case: case.clone(),
                levels: levels_to(h, cfg.converge.target),
                measured_c: diag.measured_c,
                final_e_u: h.records.last().map_or(f64::NAN, |r| r.e_u),
            });
        }
    }
    Ok(out)
}

pub fn sweep_rows(rows: &[SweepRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| vec![num(r.contrast), r.case.clone(), r.levels.map_or(String::new(), |l| l.to_string()), num(r.measured_c), num(r.final_e_u)])
        .collect()
}

pub const SWEEP_HEADER: [&str; 5] = ["contrast", "case", "levels_to_target", "measured_c", "final_e_u"];

/// Elliptic run: convergence table, diagnostics and optional contrast sweep.
pub fn converge(cfg: &ExperimentConfig, dir: &Path) -> Result<ConvergenceTable, CliError> {
    let grid = build_grid(cfg)?;
    let perm = build_perm(cfg, &grid, None)?;
    let q = corner_sources(&grid, cfg.source.density);
    fs::create_dir_all(dir)?;
    let table = run_convergence(&grid, &perm, &q, cfg)?;
    table.write(dir, "converge")?;
    if !cfg.converge.contrasts.is_empty() {
        let rows = run_contrast_sweep(cfg, &grid, &q, Some(dir))?;
        write_csv(&dir.join(SWEEP_CSV), &SWEEP_HEADER, &sweep_rows(&rows))?;
    }
    Ok(table)
}

/// Fine reference solve of the elliptic problem, written as VTK.
pub fn reference(cfg: &ExperimentConfig, dir: &Path) -> Result<(f64, f64), CliError> {
    let grid = build_grid(cfg)?;
    let perm = build_perm(cfg, &grid, None)?;
    let q = corner_sources(&grid, cfg.source.density);
    let r = fine_reference_solve(&grid, &perm, &q)?;
    let cf = r.cell_fluxes(&grid);
    fs::create_dir_all(dir)?;
    let mut v = VtkData::new(&grid);
    v.scalars.push(("p".into(), r.p.clone()));
    v.scalars.push(("log10_kappa".into(), perm.kappa().iter().map(|k| k.log10()).collect()));
    v.vectors.push(("velocity".into(), cell_velocity(&grid, &cf)));
    v.write(&dir.join("reference.vtk"), "fine reference solution")?;
    let pmax = r.p.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok((pmax, cf.conservation_error(&q)))
}

/// Write the configured field as a raw ASCII file plus a VTK view.
pub fn fieldgen(cfg: &ExperimentConfig, dir: &Path) -> Result<PermField, CliError> {
    let grid = build_grid(cfg)?;
    let perm = build_perm(cfg, &grid, None)?;
    fs::create_dir_all(dir)?;
    write_raw_field(&dir.join("perm.txt"), &perm, Layout::Ascii)?;
    let mut v = VtkData::new(&grid);
    v.scalars.push(("log10_kappa".into(), perm.kappa().iter().map(|k| k.log10()).collect()));
    v.write(&dir.join("perm.vtk"), "permeability")?;
    Ok(perm)
}

pub struct TwoPhaseRun {
    pub label: String,
    pub solver: PressureSolver,
    pub trajectory: Trajectory,
    pub rows: Vec<SeriesRow>,
}

pub struct TwoPhaseOutput {
    pub reference: Trajectory,
    pub runs: Vec<TwoPhaseRun>,
}

impl TwoPhaseOutput {
    pub fn run(&self, label: &str) -> Option<&TwoPhaseRun> {
        self.runs.iter().find(|r| r.label == label)
    }
}

pub fn time_max_error(rows: &[SeriesRow]) -> f64 {
    rows.iter().map(|r| r.e_s).fold(0.0, f64::max)
}

pub fn series_rows(rows: &[SeriesRow]) -> Vec<Vec<String>> {
    rows.iter().map(|r| vec![r.step.to_string(), num(r.time), num(r.watercut_ms), num(r.watercut_ref), num(r.e_s)]).collect()
}

fn solver_for(spec: &VariantSpec, cfg: &ExperimentConfig, grid: &GridHierarchy, perm: &PermField, wells: &WellSet) -> Result<PressureSolver, CliError> {
    let t = &cfg.twophase;
    Ok(match spec {
        VariantSpec::Full => PressureSolver::Multiscale { space: MortarSpace::full(grid), smoothing: None },
        VariantSpec::Enriched { offline, online, smoothing } => {
            let case = parse_case(&t.case).map_err(CliError::Config)?;
            let space = initial_space(grid, perm, &cfg.fluid(), wells, t.s0, *offline, *online, case)?;
            let smoothing = smoothing.then_some(JacobiConfig { iters: t.jacobi_iters, damping: t.damping });
            PressureSolver::Multiscale { space, smoothing }
        }
    })
}

/// Pressure and fluxes for a saturation snapshot.
fn snapshot(
    solver: &PressureSolver,
    grid: &GridHierarchy,
    perm: &PermField,
    cfg: &ExperimentConfig,
    wells: &WellSet,
    s: &[f64],
) -> Result<(Vec<f64>, CellFluxes), CliError> {
    let fluid = cfg.fluid();
    let q = wells.source(grid);
    match solver {
        PressureSolver::Reference => {
            let r = fine_reference_solve(grid, &perm.scaled(&mobility(s, &fluid))?, &q)?;
            let cf = r.cell_fluxes(grid);
            Ok((r.p, cf))
        }
        PressureSolver::Multiscale { space, smoothing } => {
            let (sol, systems, mperm) = pressure_step(grid, perm, &fluid, space, s, wells)?;
            let u = multiscale_velocity(grid, &mperm, &systems, &sol, &q, *smoothing)?;
            Ok((sol.p, u.to_cell_fluxes(grid)))
        }
    }
}

fn write_snapshots(
    dir: &Path,
    label: &str,
    traj: &Trajectory,
    solver: &PressureSolver,
    grid: &GridHierarchy,
    perm: &PermField,
    cfg: &ExperimentConfig,
    wells: &WellSet,
) -> Result<(), CliError> {
    let vdir = dir.join("vtk");
    fs::create_dir_all(&vdir)?;
    let logk: Vec<f64> = perm.kappa().iter().map(|k| k.log10()).collect();
    for rp in &traj.reports {
        let (p, cf) = snapshot(solver, grid, perm, cfg, wells, &rp.s)?;
        let mut v = VtkData::new(grid);
        v.scalars.push(("p".into(), p));
        v.scalars.push(("s".into(), rp.s.clone()));
        v.scalars.push(("log10_kappa".into(), logk.clone()));
        v.vectors.push(("velocity".into(), cell_velocity(grid, &cf)));
        v.write(&vdir.join(format!("twophase_{label}_{:05}.vtk", rp.step)), &format!("{label} step {}", rp.step))?;
    }
    Ok(())
}

/// Reference and variant simulations; CSVs (and VTK snapshots if enabled)
/// go to `dir` when given.
pub fn twophase(cfg: &ExperimentConfig, dir: Option<&Path>) -> Result<TwoPhaseOutput, CliError> {
    let t = &cfg.twophase;
    let grid = build_grid(cfg)?;
    let perm = build_perm(cfg, &grid, None)?.with_porosity(t.porosity).map_err(CliError::setup)?;
    let wells = WellSet::five_spot(&grid, t.rate).map_err(CliError::setup)?;
    let fluid = cfg.fluid();
    let time = mortar_core::TimeConfig { dt: t.dt, steps: t.steps, stride: t.stride, s0: t.s0 };
    let reference = simulate(&grid, &perm, &fluid, &wells, &PressureSolver::Reference, &time)?;
    let mut runs = Vec::new();
    for spec in cfg.variants() {
        let solver = solver_for(&spec, cfg, &grid, &perm, &wells)?;
        let trajectory = simulate(&grid, &perm, &fluid, &wells, &solver, &time)?;
        let rows = compare(&trajectory, &reference);
        runs.push(TwoPhaseRun { label: spec.label(), solver, trajectory, rows });
    }
    let out = TwoPhaseOutput { reference, runs };
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
        let ref_rows = compare(&out.reference, &out.reference);
        write_csv(&dir.join("twophase_reference.csv"), &SERIES_HEADER, &series_rows(&ref_rows))?;
        for r in &out.runs {
            write_csv(&dir.join(format!("twophase_{}.csv", r.label)), &SERIES_HEADER, &series_rows(&r.rows))?;
        }
        if t.vtk {
            write_snapshots(dir, "reference", &out.reference, &PressureSolver::Reference, &grid, &perm, cfg, &wells)?;
            for r in &out.runs {
                write_snapshots(dir, &r.label, &r.trajectory, &r.solver, &grid, &perm, cfg, &wells)?;
            }
        }
    }
    Ok(out)
}
