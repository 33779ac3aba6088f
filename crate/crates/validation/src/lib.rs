//! Fixed scenarios used by the acceptance target. Each writes its CSVs into
//! a caller-chosen directory so repeated runs can be compared byte for byte.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mortar_cli::experiments::{self, run_convergence, ConvergenceTable, TwoPhaseOutput};
use mortar_cli::output::{num, write_csv};
use mortar_cli::{CliError, ExperimentConfig};
use mortar_core::mortar::{assemble_skeleton, errors, recover_solution};
use mortar_core::{assemble_all, build_grids, corner_sources, fine_reference_solve, perm, GridHierarchy};

pub type Res<T> = Result<T, CliError>;

/// 100×100 channel field on 10×10 blocks, η = 1e4.
pub const CHANNEL: &str = r#"
[grid]
extents = [1.0, 1.0]
coarse = [10, 10]
fine = [10, 10]
[perm]
kind = "model1"
contrast = 1e4
[converge]
offline = 1
levels = 6
cases = ["local", "1", "a"]
target = 1e-4
"#;

/// Five-spot on 40×40 cells, 4×4 blocks.
pub const FIVE_SPOT: &str = r#"
[grid]
extents = [100.0, 100.0]
coarse = [4, 4]
fine = [10, 10]
[perm]
kind = "log_uniform"
lo = 1.0
hi = 1e4
[twophase]
steps = 500
stride = 50
dt = 1.0
case = "local"
variants = ["full", "1+1", "1+3", "1+1s", "1+3s"]
vtk = false
"#;

pub const CONTRASTS_HIGH: [f64; 3] = [1e2, 1e4, 1e6];
pub const CONTRASTS_LOW: [f64; 3] = [1e-2, 1e-4, 1e-6];

pub fn config(text: &str) -> ExperimentConfig {
    let cfg = ExperimentConfig::from_toml(text).expect("built-in scenario parses");
    cfg.validate().expect("built-in scenario is valid");
    cfg
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub e_p: f64,
    pub e_u: f64,
    pub imbalance_ms: f64,
    pub imbalance_ref: f64,
    pub seconds: f64,
}

/// Full-skeleton mortar solve against the fine solve on 20×20 cells.
pub fn snapshot(dir: &Path) -> Res<Snapshot> {
    let t = Instant::now();
    let g = build_grids(&[1.0, 1.0], &[4, 4], &[5, 5])?;
    let k = perm::log_uniform(&g, 1.0, 1e4, 1)?;
    let q = corner_sources(&g, 4.0);
    let sys = assemble_all(&g, &k)?;
    let lam = assemble_skeleton(&g, &sys, &q)?.solve()?;
    let ms = recover_solution(&g, &sys, &lam, &q)?;
    let r = fine_reference_solve(&g, &k, &q)?;
    let rf = r.cell_fluxes(&g);
    let (e_p, e_u) = errors(&g, &k, &ms.p, &ms.flux, &r.p, &rf)?;
    let s = Snapshot { e_p, e_u, imbalance_ms: ms.flux.conservation_error(&q), imbalance_ref: rf.conservation_error(&q), seconds: t.elapsed().as_secs_f64() };
    write_csv(&dir.join("snapshot.csv"), &["e_p", "e_u"], &[vec![num(e_p), num(e_u)]])?;
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct Convergence {
    pub table: ConvergenceTable,
    pub seconds: f64,
}

pub fn channel_convergence(dir: &Path) -> Res<Convergence> {
    let t = Instant::now();
    let cfg = config(CHANNEL);
    let grid = experiments::build_grid(&cfg)?;
    let k = experiments::build_perm(&cfg, &grid, None)?;
    let q = corner_sources(&grid, cfg.source.density);
    let table = run_convergence(&grid, &k, &q, &cfg)?;
    table.write(dir, "channel")?;
    Ok(Convergence { table, seconds: t.elapsed().as_secs_f64() })
}

/// Local-case enrichment on the channel geometry for each contrast.
pub fn contrast_sweep(dir: &Path, contrasts: &[f64], levels: usize) -> Res<Vec<(f64, ConvergenceTable)>> {
    let mut cfg = config(CHANNEL);
    cfg.converge.cases = vec!["local".into()];
    cfg.converge.levels = levels;
    let grid = experiments::build_grid(&cfg)?;
    let q = corner_sources(&grid, cfg.source.density);
    contrasts
        .iter()
        .map(|&eta| {
            let k = experiments::build_perm(&cfg, &grid, Some(eta))?;
            let table = run_convergence(&grid, &k, &q, &cfg)?;
            table.write(dir, &format!("sweep_eta_{}", num(eta)))?;
            Ok((eta, table))
        })
        .collect()
}

/// Exact cell integral of cos(πx)cos(πy).
fn cell_integral(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    ((PI * x1).sin() - (PI * x0).sin()) * ((PI * y1).sin() - (PI * y0).sin()) / (PI * PI)
}

/// L2 error of the cell pressures against p = cos(πx)cos(πy), κ = 1,
/// integrated with 3-point Gauss per axis.
pub fn manufactured_error(grid: &GridHierarchy) -> Res<f64> {
    let [nx, ny, _] = grid.fine();
    let [hx, hy, _] = grid.h();
    let mut q = vec![0.0; grid.num_cells()];
    for j in 0..ny {
        for i in 0..nx {
            let (x0, y0) = (i as f64 * hx, j as f64 * hy);
            q[grid.cell_index([i, j, 0])] = 2.0 * PI * PI * cell_integral(x0, x0 + hx, y0, y0 + hy);
        }
    }
    let r = fine_reference_solve(grid, &perm::PermField::constant(grid, 1.0), &q)?;
    let gp = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
    let mut err = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let ph = r.p[grid.cell_index([i, j, 0])];
            for &(a, wa) in &gp {
                for &(b, wb) in &gp {
                    let x = (i as f64 + 0.5 + 0.5 * a) * hx;
                    let y = (j as f64 + 0.5 + 0.5 * b) * hy;
                    let d = ph - (PI * x).cos() * (PI * y).cos();
                    err += 0.25 * wa * wb * hx * hy * d * d;
                }
            }
        }
    }
    Ok(err.sqrt())
}

pub fn manufactured(dir: &Path) -> Res<Vec<(usize, f64)>> {
    let out: Vec<(usize, f64)> = [20usize, 40, 80]
        .iter()
        .map(|&n| {
            let g = build_grids(&[1.0, 1.0], &[1, 1], &[n, n])?;
            Ok((n, manufactured_error(&g)?))
        })
        .collect::<Res<_>>()?;
    let rows: Vec<Vec<String>> = out.iter().map(|(n, e)| vec![n.to_string(), num(*e)]).collect();
    write_csv(&dir.join("manufactured.csv"), &["n", "l2_error"], &rows)?;
    Ok(out)
}

pub struct TwoPhase {
    pub out: TwoPhaseOutput,
    pub seconds: f64,
}

pub fn five_spot(dir: &Path) -> Res<TwoPhase> {
    let t = Instant::now();
    let out = experiments::twophase(&config(FIVE_SPOT), Some(dir))?;
    Ok(TwoPhase { out, seconds: t.elapsed().as_secs_f64() })
}

/// Every scenario, in order, into `dir`.
pub fn run_all(dir: &Path, sweep_levels: usize) -> Res<()> {
    snapshot(dir)?;
    channel_convergence(dir)?;
    contrast_sweep(dir, &CONTRASTS_HIGH, sweep_levels)?;
    contrast_sweep(dir, &CONTRASTS_LOW, sweep_levels)?;
    manufactured(dir)?;
    five_spot(dir)?;
    Ok(())
}

/// CSV files in `dir`, sorted by name.
pub fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map(|it| it.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "csv")).collect())
        .unwrap_or_default();
    v.sort();
    v
}
