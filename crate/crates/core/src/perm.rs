//! Fine-grid permeability and porosity fields: channelized synthetic fields
//! and raw array files.

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MortarError, Result};
use crate::grid::{CellBox, GridHierarchy};

pub const DEFAULT_POROSITY: f64 = 0.2;

/// Cell-wise scalar permeability and porosity, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PermField {
    dims: [usize; 3],
    kappa: Vec<f64>,
    phi: Vec<f64>,
}

impl PermField {
    pub fn new(dims: [usize; 3], kappa: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        let len: usize = dims.iter().product();
        for (what, v) in [("permeability", &kappa), ("porosity", &phi)] {
            if v.len() != len {
                return Err(MortarError::LengthMismatch { what, expected: len, got: v.len() });
            }
        }
        if let Some((index, &value)) = kappa.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(MortarError::InvalidValue { index, value });
        }
        if let Some((index, &value)) = phi.iter().enumerate().find(|(_, v)| !(**v > 0.0 && **v <= 1.0)) {
            return Err(MortarError::InvalidValue { index, value });
        }
        Ok(PermField { dims, kappa, phi })
    }

    pub fn from_kappa(dims: [usize; 3], kappa: Vec<f64>) -> Result<Self> {
        let len = kappa.len();
        Self::new(dims, kappa, vec![DEFAULT_POROSITY; len])
    }

    pub fn constant(grid: &GridHierarchy, value: f64) -> Self {
        Self::from_kappa(grid.fine(), vec![value; grid.num_cells()]).expect("constant field must be positive")
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn with_porosity(mut self, phi: f64) -> Result<Self> {
        if !(phi > 0.0 && phi <= 1.0) {
            return Err(MortarError::InvalidValue { index: 0, value: phi });
        }
        self.phi.iter_mut().for_each(|p| *p = phi);
        Ok(self)
    }

    /// Cell-wise product with a positive multiplier (e.g. total mobility).
    pub fn scaled(&self, factor: &[f64]) -> Result<Self> {
        if factor.len() != self.len() {
            return Err(MortarError::LengthMismatch { what: "multiplier", expected: self.len(), got: factor.len() });
        }
        let kappa = self.kappa.iter().zip(factor).map(|(k, m)| k * m).collect();
        Self::new(self.dims, kappa, self.phi.clone())
    }

    /// Reciprocal field, used for the inverted-contrast sweeps.
    pub fn reciprocal(&self) -> Self {
        let kappa = self.kappa.iter().map(|k| 1.0 / k).collect();
        PermField { dims: self.dims, kappa, phi: self.phi.clone() }
    }

    pub fn check_grid(&self, grid: &GridHierarchy) -> Result<()> {
        if self.dims != grid.fine() {
            return Err(MortarError::LengthMismatch {
                what: "permeability dims",
                expected: grid.num_cells(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// A high-permeability feature in fine-cell coordinates.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSpec {
    /// Half-open cell box.
    Box(CellBox),
    /// Cells within `width` of the segments joining the points
    /// (fractional cell coordinates).
    Polyline { points: Vec<[f64; 2]>, width: f64 },
}

fn mark_feature(grid: &GridHierarchy, spec: &FeatureSpec, mask: &mut [bool]) -> Result<()> {
    let fine = grid.fine();
    match spec {
        FeatureSpec::Box(b) => {
            if (0..3).any(|a| b.hi[a] > fine[a] || b.lo[a] > b.hi[a]) {
                return Err(MortarError::FeatureOutside(format!("{b:?}")));
            }
            for c in b.iter() {
                mask[grid.cell_index(c)] = true;
            }
        }
        FeatureSpec::Polyline { points, width } => {
            let inside = |p: &[f64; 2]| p[0] >= 0.0 && p[1] >= 0.0 && p[0] <= fine[0] as f64 && p[1] <= fine[1] as f64;
            if points.is_empty() || !points.iter().all(inside) || !(*width > 0.0) {
                return Err(MortarError::FeatureOutside(format!("polyline {points:?} width {width}")));
            }
            let half = 0.5 * width;
            let pts = if points.len() == 1 { vec![points[0], points[0]] } else { points.clone() };
            for seg in pts.windows(2) {
                let (a, b) = (seg[0], seg[1]);
                let lo = [a[0].min(b[0]) - half, a[1].min(b[1]) - half];
                let hi = [a[0].max(b[0]) + half, a[1].max(b[1]) + half];
                let i0 = lo[0].floor().max(0.0) as usize;
                let i1 = (hi[0].ceil() as usize).min(fine[0]);
                let j0 = lo[1].floor().max(0.0) as usize;
                let j1 = (hi[1].ceil() as usize).min(fine[1]);
                for j in j0..j1 {
                    for i in i0..i1 {
                        let c = [i as f64 + 0.5, j as f64 + 0.5];
                        if segment_distance(c, a, b) <= half {
                            for k in 0..fine[2] {
                                mask[grid.cell_index([i, j, k])] = true;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * d[0] - p[0], a[1] + t * d[1] - p[1]];
    q[0].hypot(q[1])
}

/// Two-valued field: `background` everywhere, `background·contrast` on features.
pub fn generate_channel_field(
    grid: &GridHierarchy,
    specs: &[FeatureSpec],
    background: f64,
    contrast: f64,
) -> Result<PermField> {
    if !(contrast.is_finite() && contrast > 0.0) {
        return Err(MortarError::InvalidValue { index: 0, value: contrast });
    }
    let mut mask = vec![false; grid.num_cells()];
    for s in specs {
        mark_feature(grid, s, &mut mask)?;
    }
    let kappa = mask.iter().map(|&m| if m { background * contrast } else { background }).collect();
    PermField::from_kappa(grid.fine(), kappa)
}

/// Feature list for the model-1-like geometry: long horizontal, diagonal and
/// wavy channels about 2% of the domain wide, plus seeded square inclusions.
pub fn model1_like_features(grid: &GridHierarchy, seed: u64) -> Vec<FeatureSpec> {
    let [nx, ny, _] = grid.fine();
    let (fx, fy) = (nx as f64, ny as f64);
    let width = (0.02 * fx.min(fy)).max(1.0);
    let mut specs = Vec::new();
    for frac in [0.22, 0.61] {
        specs.push(FeatureSpec::Polyline { points: vec![[0.0, frac * fy], [fx, frac * fy]], width });
    }
    specs.push(FeatureSpec::Polyline { points: vec![[0.05 * fx, 0.95 * fy], [0.7 * fx, 0.3 * fy]], width });
    specs.push(FeatureSpec::Polyline { points: vec![[0.35 * fx, 0.05 * fy], [0.95 * fx, 0.5 * fy]], width });
    let wave: Vec<[f64; 2]> = (0..=64)
        .map(|s| {
            let x = fx * s as f64 / 64.0;
            [x, 0.82 * fy + 0.07 * fy * (std::f64::consts::TAU * 2.0 * x / fx).sin()]
        })
        .collect();
    specs.push(FeatureSpec::Polyline { points: wave, width });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = ((0.04 * fx.min(fy)).round() as usize).max(1);
    let count = ((nx * ny) as f64 / 400.0).round().max(4.0) as usize;
    for _ in 0..count {
        let i = rng.random_range(0..=nx.saturating_sub(side));
        let j = rng.random_range(0..=ny.saturating_sub(side));
        let mut hi = [i + side, j + side, grid.fine()[2]];
        hi[0] = hi[0].min(nx);
        hi[1] = hi[1].min(ny);
        specs.push(FeatureSpec::Box(CellBox::new([i, j, 0], hi)));
    }
    specs
}

pub fn model1_like(grid: &GridHierarchy, seed: u64, contrast: f64) -> Result<PermField> {
    generate_channel_field(grid, &model1_like_features(grid, seed), 1.0, contrast)
}

/// Log-uniform random field on `[lo, hi]`.
pub fn log_uniform(grid: &GridHierarchy, lo: f64, hi: f64, seed: u64) -> Result<PermField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (lo.ln(), hi.ln());
    let kappa = (0..grid.num_cells()).map(|_| rng.random_range(a..=b).exp()).collect();
    PermField::from_kappa(grid.fine(), kappa)
}

/// Field recipe read from a feature spec file.
///
/// ```text
/// # comment
/// background 1
/// contrast 1e4
/// box 0 10 100 12          # x0 y0 x1 y1 [z0 z1], half-open cells
/// polyline 2 0 50 100 50   # width, then x y pairs
/// preset model1 7          # preset name and seed
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct FieldRecipe {
    pub background: f64,
    pub contrast: f64,
    pub features: Vec<FeatureSpec>,
    pub presets: Vec<(String, u64)>,
}

impl Default for FieldRecipe {
    fn default() -> Self {
        FieldRecipe { background: 1.0, contrast: 1e4, features: Vec::new(), presets: Vec::new() }
    }
}

impl FieldRecipe {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut r = FieldRecipe::default();
        let err = |line: usize, reason: String| MortarError::Parse {
            path: path.to_path_buf(),
            reason: format!("line {}: {reason}", line + 1),
        };
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let key = words.next().unwrap();
            let rest: Vec<&str> = words.collect();
            let nums = || -> Result<Vec<f64>> {
                rest.iter().map(|w| w.parse::<f64>().map_err(|e| err(ln, format!("{w}: {e}")))).collect()
            };
            match key {
                "background" | "contrast" => {
                    let v = nums()?;
                    if v.len() != 1 {
                        return Err(err(ln, format!("{key} takes one value")));
                    }
                    if key == "background" {
                        r.background = v[0];
                    } else {
                        r.contrast = v[0];
                    }
                }
                "box" => {
                    let v = nums()?;
                    if !(v.len() == 4 || v.len() == 6) || v.iter().any(|x| *x < 0.0 || x.fract() != 0.0) {
                        return Err(err(ln, "box takes 4 or 6 non-negative integers".into()));
                    }
                    let u: Vec<usize> = v.iter().map(|&x| x as usize).collect();
                    let (z0, z1) = if u.len() == 6 { (u[4], u[5]) } else { (0, usize::MAX) };
                    r.features.push(FeatureSpec::Box(CellBox::new([u[0], u[1], z0], [u[2], u[3], z1])));
                }
                "polyline" => {
                    let v = nums()?;
                    if v.len() < 3 || v.len() % 2 == 0 {
                        return Err(err(ln, "polyline takes a width and x y pairs".into()));
                    }
                    let points = v[1..].chunks(2).map(|c| [c[0], c[1]]).collect();
                    r.features.push(FeatureSpec::Polyline { points, width: v[0] });
                }
                "preset" => {
                    if rest.is_empty() || rest.len() > 2 {
                        return Err(err(ln, "preset takes a name and an optional seed".into()));
                    }
                    let seed = match rest.get(1) {
                        Some(s) => s.parse().map_err(|e| err(ln, format!("seed: {e}")))?,
                        None => 0,
                    };
                    if rest[0] != "model1" {
                        return Err(err(ln, format!("unknown preset {}", rest[0])));
                    }
                    r.presets.push((rest[0].to_string(), seed));
                }
                other => return Err(err(ln, format!("unknown key {other}"))),
            }
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| MortarError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    pub fn build(&self, grid: &GridHierarchy) -> Result<PermField> {
        let mut specs = Vec::new();
        for (_, seed) in &self.presets {
            specs.extend(model1_like_features(grid, *seed));
        }
        for f in &self.features {
            specs.push(match f {
                // an open z-range means "all layers"
                FeatureSpec::Box(b) if b.hi[2] == usize::MAX => {
                    FeatureSpec::Box(CellBox::new(b.lo, [b.hi[0], b.hi[1], grid.fine()[2]]))
                }
                other => other.clone(),
            });
        }
        generate_channel_field(grid, &specs, self.background, self.contrast)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// Header line `nx ny nz`, then whitespace-separated values.
    Ascii,
    /// Little-endian f64 values, no header.
    BinaryLe,
}

/// Load a permeability file whose full dims are `dims`; `layers` selects a
/// contiguous z-range.
pub fn load_raw_field(path: &Path, dims: [usize; 3], layout: Layout, layers: Option<Range<usize>>) -> Result<PermField> {
    let perr = |reason: String| MortarError::Parse { path: path.to_path_buf(), reason };
    let io = |source| MortarError::Io { path: path.to_path_buf(), source };
    let len: usize = dims.iter().product();
    let values: Vec<f64> = match layout {
        Layout::Ascii => {
            let text = fs::read_to_string(path).map_err(io)?;
            let mut lines = text.lines();
            let header: Vec<usize> = lines
                .next()
                .ok_or_else(|| perr("missing header".into()))?
                .split_whitespace()
                .map(|w| w.parse().map_err(|e| perr(format!("header: {e}"))))
                .collect::<Result<_>>()?;
            if header.as_slice() != dims {
                return Err(perr(format!("header {header:?} does not match dims {dims:?}")));
            }
            lines
                .flat_map(str::split_whitespace)
                .enumerate()
                .map(|(i, w)| w.parse::<f64>().map_err(|e| perr(format!("value {i}: {e}"))))
                .collect::<Result<_>>()?
        }
        Layout::BinaryLe => {
            let bytes = fs::read(path).map_err(io)?;
            if bytes.len() % 8 != 0 {
                return Err(perr(format!("{} bytes is not a whole number of f64", bytes.len())));
            }
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()
        }
    };
    if values.len() != len {
        return Err(MortarError::LengthMismatch { what: "field file", expected: len, got: values.len() });
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(MortarError::InvalidValue { index, value });
    }
    let layers = layers.unwrap_or(0..dims[2]);
    if layers.start >= layers.end || layers.end > dims[2] {
        return Err(perr(format!("layer range {layers:?} outside 0..{}", dims[2])));
    }
    let plane = dims[0] * dims[1];
    let kappa = values[layers.start * plane..layers.end * plane].to_vec();
    PermField::from_kappa([dims[0], dims[1], layers.len()], kappa)
}

pub fn write_raw_field(path: &Path, field: &PermField, layout: Layout) -> Result<()> {
    let io = |source| MortarError::Io { path: path.to_path_buf(), source };
    let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(io)?);
    match layout {
        Layout::Ascii => {
            let [nx, ny, nz] = field.dims;
            writeln!(f, "{nx} {ny} {nz}").map_err(io)?;
            for row in field.kappa.chunks(nx) {
                let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                writeln!(f, "{}", line.join(" ")).map_err(io)?;
            }
        }
        Layout::BinaryLe => {
            for v in &field.kappa {
                f.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
    }
    f.flush().map_err(io)
}
