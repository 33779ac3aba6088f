use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use mortar_cli::config::{FileLayout, PermConfig};
use mortar_cli::experiments::{self, levels_to, time_max_error};
use mortar_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mortar", version, about = "Multiscale mortar mixed FEM experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Raw ASCII permeability file replacing the configured field.
    #[arg(long, global = true, conflicts_with = "perm_gen")]
    perm: Option<PathBuf>,
    /// Channel-field recipe replacing the configured field.
    #[arg(long, global = true)]
    perm_gen: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Enrichment convergence table per oversampling case.
    Converge,
    /// Five-spot two-phase runs against the fine reference.
    Twophase,
    /// Fine-scale elliptic solve.
    Reference,
    /// Write the configured permeability field.
    Fieldgen,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(path) = cli.perm {
        cfg.perm = PermConfig::File { path, layout: FileLayout::Ascii, dims: None, layers: None };
    }
    if let Some(path) = cli.perm_gen {
        cfg.perm = PermConfig::Recipe { path };
    }
    cfg.validate()?;
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    }
    let dir = cli.out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    info!("writing to {}", dir.display());
    match cli.command {
        Command::Converge => {
            let table = experiments::converge(&cfg, &dir)?;
            for ((case, h), d) in table.cases.iter().zip(&table.runs).zip(table.diagnostics()) {
                let last = h.records.last().expect("at least the offline level");
                let hit = levels_to(h, cfg.converge.target).map_or("-".to_string(), |l| l.to_string());
                println!(
                    "case {case}: levels {} e_p {:.3e} e_u {:.3e} to_target {hit} contraction {} C {:.3e}",
                    h.records.len() - 1,
                    last.e_p,
                    last.e_u,
                    d.contraction_holds,
                    d.measured_c
                );
            }
        }
        Command::Twophase => {
            let out = experiments::twophase(&cfg, Some(&dir))?;
            println!("reference: max imbalance {:.3e}", out.reference.max_imbalance);
            for r in &out.runs {
                let last = r.rows.last().map_or(0.0, |x| x.e_s);
                println!(
                    "{}: final e_s {:.4e} max e_s {:.4e} max imbalance {:.3e}",
                    r.label,
                    last,
                    time_max_error(&r.rows),
                    r.trajectory.max_imbalance
                );
            }
        }
        Command::Reference => {
            let (pmax, cons) = experiments::reference(&cfg, &dir)?;
            println!("max |p| {pmax:.6e} max imbalance {cons:.3e}");
        }
        Command::Fieldgen => {
            let perm = experiments::fieldgen(&cfg, &dir)?;
            let (lo, hi) = perm.kappa().iter().fold((f64::INFINITY, 0.0f64), |(a, b), &k| (a.min(k), b.max(k)));
            println!("{} cells, kappa in [{lo:.3e}, {hi:.3e}]", perm.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
