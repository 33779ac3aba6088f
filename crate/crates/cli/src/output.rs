//! CSV tables and legacy VTK structured-points files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mortar_core::{CellFluxes, GridHierarchy};

use crate::error::CliError;

/// Shortest round-trip float formatting, so equal values give equal bytes.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| CliError::Solver(format!("{}: {e}", path.display())))
}

/// Cell-centered velocity from outward face fluxes.
pub fn cell_velocity(grid: &GridHierarchy, u: &CellFluxes) -> Vec<[f64; 3]> {
    (0..grid.num_cells())
        .map(|c| {
            let f = u.cell(c);
            let mut v = [0.0; 3];
            for (a, va) in v.iter_mut().enumerate().take(grid.dim()) {
                *va = (f[2 * a + 1] - f[2 * a]) / (2.0 * grid.face_area(a));
            }
            v
        })
        .collect()
}

/// Cell fields on a structured grid.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VtkData {
    /// Cell counts per axis (1 in z for 2D).
    pub cells: [usize; 3],
    pub spacing: [f64; 3],
    pub scalars: Vec<(String, Vec<f64>)>,
    pub vectors: Vec<(String, Vec<[f64; 3]>)>,
}

impl VtkData {
    pub fn new(grid: &GridHierarchy) -> Self {
        let h = grid.h();
        let f = grid.fine();
        VtkData { cells: f, spacing: [h[0], h[1], if grid.dim() == 3 { h[2] } else { 1.0 }], ..Default::default() }
    }

    fn point_dims(&self, flat: bool) -> [usize; 3] {
        [self.cells[0] + 1, self.cells[1] + 1, if flat { 1 } else { self.cells[2] + 1 }]
    }

    pub fn render(&self, title: &str) -> String {
        let flat = self.cells[2] == 1;
        let d = self.point_dims(flat);
        let n: usize = self.cells.iter().product();
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\n");
        let _ = writeln!(s, "{}", title.lines().next().unwrap_or(""));
        s.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
        let _ = writeln!(s, "DIMENSIONS {} {} {}", d[0], d[1], d[2]);
        s.push_str("ORIGIN 0 0 0\n");
        let _ = writeln!(s, "SPACING {:.16e} {:.16e} {:.16e}", self.spacing[0], self.spacing[1], self.spacing[2]);
        let _ = writeln!(s, "CELL_DATA {n}");
        for (name, vals) in &self.scalars {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in vals {
                let _ = writeln!(s, "{v:.16e}");
            }
        }
        for (name, vals) in &self.vectors {
            let _ = writeln!(s, "VECTORS {name} double");
            for v in vals {
                let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", v[0], v[1], v[2]);
            }
        }
        s
    }

    pub fn write(&self, path: &Path, title: &str) -> Result<(), CliError> {
        fs::write(path, self.render(title)).map_err(|e| CliError::Solver(format!("{}: {e}", path.display())))
    }

    /// Minimal reader for files produced by [`VtkData::render`].
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut out = VtkData::default();
        let mut lines = text.lines().peekable();
        let mut n = 0usize;
        while let Some(line) = lines.next() {
            let w: Vec<&str> = line.split_whitespace().collect();
            match w.first().copied() {
                Some("DIMENSIONS") => {
                    let d: Vec<usize> = w[1..].iter().map(|x| x.parse().map_err(|e| format!("{e}"))).collect::<Result<_, _>>()?;
                    if d.len() != 3 {
                        return Err("DIMENSIONS needs three values".into());
                    }
                    out.cells = [d[0] - 1, d[1] - 1, if d[2] == 1 { 1 } else { d[2] - 1 }];
                }
                Some("SPACING") => {
                    for (a, x) in w[1..].iter().enumerate().take(3) {
                        out.spacing[a] = x.parse().map_err(|e| format!("{e}"))?;
                    }
                }
                Some("CELL_DATA") => n = w.get(1).ok_or("CELL_DATA count")?.parse().map_err(|e| format!("{e}"))?,
                Some("SCALARS") => {
                    let name = w.get(1).ok_or("SCALARS name")?.to_string();
                    if lines.next().map(str::trim) != Some("LOOKUP_TABLE default") {
                        return Err(format!("{name}: missing lookup table"));
                    }
                    let vals = (0..n)
                        .map(|_| lines.next().ok_or("truncated scalars")?.trim().parse::<f64>().map_err(|e| e.to_string()))
                        .collect::<Result<_, String>>()?;
                    out.scalars.push((name, vals));
                }
                Some("VECTORS") => {
                    let name = w.get(1).ok_or("VECTORS name")?.to_string();
                    let mut vals = Vec::with_capacity(n);
                    for _ in 0..n {
                        let l = lines.next().ok_or("truncated vectors")?;
                        let c: Vec<f64> = l.split_whitespace().map(|x| x.parse().map_err(|e| format!("{e}"))).collect::<Result<_, _>>()?;
                        if c.len() != 3 {
                            return Err("vector needs three components".into());
                        }
                        vals.push([c[0], c[1], c[2]]);
                    }
                    out.vectors.push((name, vals));
                }
                _ => {}
            }
        }
        Ok(out)
    }
}
