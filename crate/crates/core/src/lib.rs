//! Multiscale mortar mixed finite elements on nested Cartesian grids with
//! residual-driven online enrichment of the mortar space, oversampled local
//! problems, and a sequential two-phase flow simulator built on top.

pub mod error;
pub mod grid;
pub mod hybrid;
pub mod linalg;
pub mod mortar;
pub mod online;
pub mod perm;
pub mod twophase;

pub use error::{MortarError, Result};
pub use grid::{build_grids, color_classes, neighborhood, oversample_region, CellBox, CoarseEdge, DMatrix, GridHierarchy, Region};
pub use perm::{generate_channel_field, load_raw_field, write_raw_field, FeatureSpec, FieldRecipe, Layout, PermField};
pub use hybrid::{assemble_all, assemble_fine_hybrid, corner_sources, fine_reference_solve, CellFluxes, FaceFlux, FineHybridSystem, FineSolution, SubdomainSystem};
pub use mortar::{assemble_interface, multiscale_solve, solve_interface, InterfaceOperator, MortarSpace, MultiscaleSolution};
pub use online::{convergence_diagnostics, enrichment_loop, run_enrichment, EnrichmentConfig, EnrichmentHistory, LevelRecord, OnlineContext, OversamplingCase};
pub use twophase::{run_twophase, simulate, FluidModel, PressureSolver, TimeConfig, TwoPhaseState, Variant, WellSet};
