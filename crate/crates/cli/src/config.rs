//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use mortar_core::online::OversamplingCase;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for generated fields.
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub grid: GridConfig,
    pub perm: PermConfig,
    pub source: SourceConfig,
    pub converge: ConvergeConfig,
    pub twophase: TwoPhaseConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            out: None,
            grid: GridConfig::default(),
            perm: PermConfig::default(),
            source: SourceConfig::default(),
            converge: ConvergeConfig::default(),
            twophase: TwoPhaseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub extents: Vec<f64>,
    /// Coarse blocks per axis.
    pub coarse: Vec<usize>,
    /// Fine cells per block per axis.
    pub fine: Vec<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { extents: vec![1.0, 1.0], coarse: vec![10, 10], fine: vec![10, 10] }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum FileLayout {
    Ascii,
    Binary,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PermConfig {
    Model1 {
        #[serde(default = "default_contrast")]
        contrast: f64,
    },
    LogUniform {
        lo: f64,
        hi: f64,
    },
    Constant {
        value: f64,
    },
    Recipe {
        path: PathBuf,
    },
    File {
        path: PathBuf,
        #[serde(default = "default_layout")]
        layout: FileLayout,
        /// Full dims of the file; defaults to the grid's fine counts.
        dims: Option<[usize; 3]>,
        /// Half-open z-range of layers to use.
        layers: Option<[usize; 2]>,
    },
}

fn default_contrast() -> f64 {
    1e4
}

fn default_layout() -> FileLayout {
    FileLayout::Ascii
}

impl Default for PermConfig {
    fn default() -> Self {
        PermConfig::Model1 { contrast: 1e4 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// Source density in the top-left fine cell; its negative goes bottom-right.
    pub density: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig { density: 4.0 }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub offline: usize,
    pub levels: usize,
    /// Any of "local", "1", "a", "b".
    pub cases: Vec<String>,
    /// Feature contrasts for a robustness sweep (empty: none).
    pub contrasts: Vec<f64>,
    /// e_u threshold used to count levels in the sweep.
    pub target: f64,
    pub gauss_seidel: bool,
    pub stop_residual: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            offline: 1,
            levels: 6,
            cases: vec!["1".into(), "a".into(), "b".into()],
            contrasts: Vec::new(),
            target: 1e-4,
            gauss_seidel: false,
            stop_residual: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TwoPhaseConfig {
    pub mu_w: f64,
    pub mu_o: f64,
    pub n_w: f64,
    pub n_o: f64,
    pub s_wr: f64,
    pub s_or: f64,
    /// Linear fractional flow `f_w = s` with unit mobility.
    pub linear: bool,
    pub porosity: f64,
    /// Injection rate per corner well.
    pub rate: f64,
    pub dt: f64,
    pub steps: usize,
    pub stride: usize,
    pub s0: f64,
    /// Smooth every multiscale variant; a trailing `s` on a variant does it per variant.
    pub smoothing: bool,
    pub jacobi_iters: usize,
    pub damping: f64,
    /// Local problem used to build the online space at t = 0.
    pub case: String,
    /// "full" or "<offline>+<online>", optionally suffixed with "s".
    pub variants: Vec<String>,
    pub vtk: bool,
}

impl Default for TwoPhaseConfig {
    fn default() -> Self {
        TwoPhaseConfig {
            mu_w: 1.0,
            mu_o: 5.0,
            n_w: 2.0,
            n_o: 2.0,
            s_wr: 0.0,
            s_or: 0.0,
            linear: false,
            porosity: 0.2,
            rate: 1.0,
            dt: 1.0,
            steps: 2500,
            stride: 50,
            s0: 0.0,
            smoothing: false,
            jacobi_iters: 10,
            damping: 2.0 / 3.0,
            case: "local".into(),
            variants: vec!["full".into(), "1+1".into(), "1+3".into()],
            vtk: true,
        }
    }
}

/// Parsed two-phase variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VariantSpec {
    Full,
    Enriched { offline: usize, online: usize, smoothing: bool },
}

impl VariantSpec {
    pub fn parse(s: &str, smoothing_default: bool) -> Result<Self, String> {
        if s == "full" {
            return Ok(VariantSpec::Full);
        }
        let (body, smooth) = match s.strip_suffix('s') {
            Some(b) => (b, true),
            None => (s, smoothing_default),
        };
        let (a, b) = body.split_once('+').ok_or_else(|| format!("variant {s:?}: expected \"full\" or \"k+m\""))?;
        let offline: usize = a.parse().map_err(|_| format!("variant {s:?}: bad offline count"))?;
        let online: usize = b.parse().map_err(|_| format!("variant {s:?}: bad online count"))?;
        if offline == 0 {
            return Err(format!("variant {s:?}: offline count must be at least 1"));
        }
        Ok(VariantSpec::Enriched { offline, online, smoothing: smooth })
    }

    /// File label: `full`, `on3`, `on3s`, or `k2on3` when offline ≠ 1.
    pub fn label(&self) -> String {
        match self {
            VariantSpec::Full => "full".into(),
            VariantSpec::Enriched { offline, online, smoothing } => {
                let base = if *offline == 1 { format!("on{online}") } else { format!("k{offline}on{online}") };
                if *smoothing {
                    base + "s"
                } else {
                    base
                }
            }
        }
    }
}

pub fn parse_case(s: &str) -> Result<OversamplingCase, String> {
    match s {
        "local" => Ok(OversamplingCase::Local),
        "1" => Ok(OversamplingCase::Case1),
        "a" => Ok(OversamplingCase::CaseA),
        "b" => Ok(OversamplingCase::CaseB),
        other => Err(format!("unknown case {other:?} (expected local, 1, a or b)")),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: &str| Err(CliError::Config(format!("{key}: {msg}")));
        let g = &self.grid;
        let d = g.extents.len();
        if !(d == 2 || d == 3) {
            return bad("grid.extents", "needs 2 or 3 entries");
        }
        if g.coarse.len() != d || g.fine.len() != d {
            return bad("grid", "extents, coarse and fine must have the same length");
        }
        if g.extents.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return bad("grid.extents", "must be positive");
        }
        if g.coarse.iter().chain(&g.fine).any(|&n| n == 0) {
            return bad("grid", "counts must be at least 1");
        }
        match &self.perm {
            PermConfig::Model1 { contrast } if !(*contrast > 0.0 && contrast.is_finite()) => return bad("perm.contrast", "must be positive"),
            PermConfig::LogUniform { lo, hi } if !(*lo > 0.0 && hi >= lo && hi.is_finite()) => {
                return bad("perm", "log_uniform needs 0 < lo <= hi")
            }
            PermConfig::Constant { value } if !(*value > 0.0 && value.is_finite()) => return bad("perm.value", "must be positive"),
            PermConfig::Recipe { path } | PermConfig::File { path, .. } if !path.exists() => {
                return bad("perm.path", &format!("{} does not exist", path.display()))
            }
            PermConfig::File { layers: Some([a, b]), .. } if a >= b => return bad("perm.layers", "empty layer range"),
            _ => {}
        }
        if !self.source.density.is_finite() {
            return bad("source.density", "must be finite");
        }
        let c = &self.converge;
        if c.offline == 0 {
            return bad("converge.offline", "must be at least 1");
        }
        if c.cases.is_empty() {
            return bad("converge.cases", "list at least one case");
        }
        for s in &c.cases {
            parse_case(s).map_err(|m| CliError::Config(format!("converge.cases: {m}")))?;
        }
        if c.contrasts.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return bad("converge.contrasts", "must be positive");
        }
        if !(c.target > 0.0) || c.stop_residual < 0.0 {
            return bad("converge", "target must be positive and stop_residual non-negative");
        }
        let t = &self.twophase;
        if !(t.porosity > 0.0 && t.porosity <= 1.0) {
            return bad("twophase.porosity", "must lie in (0, 1]");
        }
        if !(t.rate > 0.0) || !(t.dt > 0.0) {
            return bad("twophase", "rate and dt must be positive");
        }
        if t.stride == 0 {
            return bad("twophase.stride", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&t.s0) {
            return bad("twophase.s0", "must lie in [0, 1]");
        }
        if !(t.damping > 0.0 && t.damping <= 1.0) {
            return bad("twophase.damping", "must lie in (0, 1]");
        }
        parse_case(&t.case).map_err(|m| CliError::Config(format!("twophase.case: {m}")))?;
        for v in &t.variants {
            VariantSpec::parse(v, t.smoothing).map_err(|m| CliError::Config(format!("twophase.variants: {m}")))?;
        }
        self.fluid().validate().map_err(|e| CliError::Config(format!("twophase: {e}")))?;
        Ok(())
    }

    pub fn fluid(&self) -> mortar_core::FluidModel {
        let t = &self.twophase;
        let mode = if t.linear { mortar_core::twophase::FluxMode::Linear } else { mortar_core::twophase::FluxMode::Corey };
        mortar_core::FluidModel { mu_w: t.mu_w, mu_o: t.mu_o, n_w: t.n_w, n_o: t.n_o, s_wr: t.s_wr, s_or: t.s_or, rho_w: 1.0, mode }
    }

    pub fn variants(&self) -> Vec<VariantSpec> {
        self.twophase.variants.iter().map(|v| VariantSpec::parse(v, self.twophase.smoothing).expect("validated")).collect()
    }
}
