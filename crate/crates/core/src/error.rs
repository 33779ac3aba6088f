use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, MortarError>;

#[derive(Debug, Error)]
pub enum MortarError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("coarse edge {0} lies on the domain boundary")]
    BoundaryEdge(usize),

    #[error("empty region for coarse edge {edge}: {reason}")]
    EmptyRegion { edge: usize, reason: String },

    #[error("invalid permeability field at cell {index}: value {value}")]
    InvalidValue { index: usize, value: f64 },

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("feature spec outside the grid: {0}")]
    FeatureOutside(String),

    #[error("malformed field file {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("factorization failed for block {block}")]
    BlockFactorization { block: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("source is incompatible with no-flow boundary: net imbalance {imbalance:e}")]
    IncompatibleSource { imbalance: f64 },

    #[error("interface solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    NotConverged { residual: f64, iterations: usize },

    #[error("reference {0} has zero norm")]
    ZeroReference(&'static str),

    #[error("velocity is not conservative at cell {cell}: imbalance {imbalance:e}")]
    NonConservative { cell: usize, imbalance: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}
