//! Nested Cartesian coarse/fine grids, coarse skeleton edges, neighborhoods
//! and oversampled regions.
//!
//! Cells are indexed x-fastest. Faces are grouped by normal axis; a face on
//! axis `a` is addressed by the fine coordinates of the cell on its plus side
//! (so the `a` coordinate runs over `0..=fine[a]`). Two-dimensional grids
//! carry a unit z-extent so areas and volumes need no special casing.

use crate::error::{MortarError, Result};

/// Half-open box of fine cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CellBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CellBox {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> Self {
        CellBox { lo, hi }
    }

    pub fn extent(&self, axis: usize) -> usize {
        self.hi[axis].saturating_sub(self.lo[axis])
    }

    pub fn len(&self) -> usize {
        (0..3).map(|a| self.extent(a)).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, ijk: [usize; 3]) -> bool {
        (0..3).all(|a| ijk[a] >= self.lo[a] && ijk[a] < self.hi[a])
    }

    /// True when `other` lies entirely inside `self`.
    pub fn contains_box(&self, other: &CellBox) -> bool {
        other.is_empty() || (0..3).all(|a| other.lo[a] >= self.lo[a] && other.hi[a] <= self.hi[a])
    }

    pub fn intersects(&self, other: &CellBox) -> bool {
        (0..3).all(|a| self.lo[a].max(other.lo[a]) < self.hi[a].min(other.hi[a]))
    }

    /// Cell coordinates in x-fastest order.
    pub fn iter(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let (lo, hi) = (self.lo, self.hi);
        (lo[2]..hi[2]).flat_map(move |k| {
            (lo[1]..hi[1]).flat_map(move |j| (lo[0]..hi[0]).map(move |i| [i, j, k]))
        })
    }
}

/// A coarse interface: the union of fine faces on one coarse plane between
/// (at most) two coarse blocks.
#[derive(Debug, Clone)]
pub struct CoarseEdge {
    pub id: usize,
    /// Normal axis. In 2D axis 0 edges are the vertical ones.
    pub axis: usize,
    /// Coarse coordinates; `coarse[axis]` is the plane index in `0..=N[axis]`.
    pub coarse: [usize; 3],
    /// Block on the low side. Its outward normal on this edge is `+axis`.
    pub minus: Option<usize>,
    /// Block on the high side. Its outward normal on this edge is `-axis`.
    pub plus: Option<usize>,
    /// Global fine face ids, x-fastest over the transverse coordinates.
    pub faces: Vec<usize>,
    /// Position among interior edges, if interior.
    pub skeleton: Option<usize>,
}

impl CoarseEdge {
    pub fn is_interior(&self) -> bool {
        self.minus.is_some() && self.plus.is_some()
    }

    pub fn blocks(&self) -> impl Iterator<Item = usize> + '_ {
        self.minus.into_iter().chain(self.plus)
    }

    /// Sign of the edge's +axis direction relative to `block`'s outward normal.
    pub fn outward_sign(&self, block: usize) -> Option<f64> {
        if self.minus == Some(block) {
            Some(1.0)
        } else if self.plus == Some(block) {
            Some(-1.0)
        } else {
            None
        }
    }

    pub fn plane(&self) -> usize {
        self.coarse[self.axis]
    }
}

/// Oversampling extents in fine-cell units.
///
/// For an edge normal to x the box spans `d11` cells on each side of the
/// edge and extends `d12` cells past each endpoint; an edge normal to y uses
/// `d22` and `d21`. Edges normal to z reuse `(d11, d12)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DMatrix {
    pub d11: usize,
    pub d12: usize,
    pub d21: usize,
    pub d22: usize,
}

impl DMatrix {
    pub fn new(d11: usize, d12: usize, d21: usize, d22: usize) -> Self {
        DMatrix { d11, d12, d21, d22 }
    }

    fn for_axis(&self, axis: usize) -> (usize, usize) {
        match axis {
            1 => (self.d22, self.d21),
            _ => (self.d11, self.d12),
        }
    }
}

/// Axis-aligned region of fine cells attached to a coarse edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub edge: usize,
    pub cells: CellBox,
    pub oversampled: bool,
}

impl Region {
    pub fn cell_ids(&self, grid: &GridHierarchy) -> Vec<usize> {
        self.cells.iter().map(|c| grid.cell_index(c)).collect()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Faces with both neighbor cells inside the region.
    pub fn interior_faces(&self, grid: &GridHierarchy) -> Vec<usize> {
        self.faces_where(grid, |m, p| m && p)
    }

    /// Faces with exactly one neighbor cell inside the region, excluding faces
    /// on the domain boundary.
    pub fn boundary_faces(&self, grid: &GridHierarchy) -> Vec<usize> {
        self.faces_where(grid, |m, p| m != p)
    }

    fn faces_where(&self, grid: &GridHierarchy, keep: impl Fn(bool, bool) -> bool) -> Vec<usize> {
        let mut out = Vec::new();
        for axis in 0..grid.dim() {
            let mut lo = self.cells.lo;
            let mut hi = self.cells.hi;
            hi[axis] += 1;
            lo[axis] = lo[axis].max(1);
            hi[axis] = hi[axis].min(grid.fine()[axis]);
            for ijk in CellBox::new(lo, hi).iter() {
                let mut m = ijk;
                m[axis] -= 1;
                if keep(self.cells.contains(m), self.cells.contains(ijk)) {
                    out.push(grid.face_id(axis, ijk));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Coarse edges whose fine faces all lie in the closure of the region.
    pub fn covered_edges(&self, grid: &GridHierarchy) -> Vec<usize> {
        grid.edges()
            .iter()
            .filter(|e| {
                let b = grid.edge_face_box(e.id);
                let a = e.axis;
                let lo = self.cells.lo;
                let mut hi = self.cells.hi;
                hi[a] += 1;
                CellBox::new(lo, hi).contains_box(&b)
            })
            .map(|e| e.id)
            .collect()
    }
}

/// Nested coarse/fine Cartesian grids.
#[derive(Debug, Clone)]
pub struct GridHierarchy {
    dim: usize,
    extents: [f64; 3],
    coarse: [usize; 3],
    n: [usize; 3],
    fine: [usize; 3],
    h: [f64; 3],
    face_offset: [usize; 4],
    edge_offset: [usize; 4],
    edges: Vec<CoarseEdge>,
    skeleton: Vec<usize>,
    skeleton_offset: Vec<usize>,
    skeleton_pos: Vec<Option<usize>>,
}

/// Build the grid hierarchy. `extents`, `coarse` and `n` are given per axis;
/// their common length (2 or 3) is the dimension.
pub fn build_grids(extents: &[f64], coarse: &[usize], n: &[usize]) -> Result<GridHierarchy> {
    let dim = extents.len();
    if !(dim == 2 || dim == 3) || coarse.len() != dim || n.len() != dim {
        return Err(MortarError::InvalidGrid(format!(
            "dimension must be 2 or 3 with matching lengths, got {}/{}/{}",
            extents.len(),
            coarse.len(),
            n.len()
        )));
    }
    for a in 0..dim {
        if !(extents[a].is_finite() && extents[a] > 0.0) {
            return Err(MortarError::InvalidGrid(format!("extent {} is not positive", extents[a])));
        }
        if coarse[a] == 0 || n[a] == 0 {
            return Err(MortarError::InvalidGrid("coarse and fine counts must be positive".into()));
        }
    }
    let mut g = GridHierarchy {
        dim,
        extents: [1.0; 3],
        coarse: [1; 3],
        n: [1; 3],
        fine: [1; 3],
        h: [1.0; 3],
        face_offset: [0; 4],
        edge_offset: [0; 4],
        edges: Vec::new(),
        skeleton: Vec::new(),
        skeleton_offset: vec![0],
        skeleton_pos: Vec::new(),
    };
    for a in 0..dim {
        g.extents[a] = extents[a];
        g.coarse[a] = coarse[a];
        g.n[a] = n[a];
        g.fine[a] = coarse[a] * n[a];
        g.h[a] = extents[a] / g.fine[a] as f64;
    }
    for a in 0..3 {
        let count = if a < dim { g.faces_on_axis(a) } else { 0 };
        g.face_offset[a + 1] = g.face_offset[a] + count;
    }

    let mut vertical_first = Vec::new();
    for axis in 0..dim {
        let mut dims = g.coarse;
        dims[axis] += 1;
        let start = g.edges.len();
        g.edge_offset[axis] = start;
        for c in CellBox::new([0; 3], dims).iter() {
            let id = g.edges.len();
            let plane = c[axis];
            let minus = (plane > 0).then(|| {
                let mut b = c;
                b[axis] -= 1;
                g.block_index(b)
            });
            let plus = (plane < g.coarse[axis]).then(|| g.block_index(c));
            let mut edge = CoarseEdge { id, axis, coarse: c, minus, plus, faces: Vec::new(), skeleton: None };
            edge.faces = g.edge_face_box_of(&edge).iter().map(|f| g.face_id(axis, f)).collect();
            if edge.is_interior() {
                vertical_first.push(id);
            }
            g.edges.push(edge);
        }
        g.edge_offset[axis + 1] = g.edges.len();
    }
    for a in dim..3 {
        g.edge_offset[a + 1] = g.edges.len();
    }
    g.skeleton_pos = vec![None; g.num_faces()];
    for (s, &id) in vertical_first.iter().enumerate() {
        g.edges[id].skeleton = Some(s);
        let base = *g.skeleton_offset.last().unwrap();
        for (k, &f) in g.edges[id].faces.iter().enumerate() {
            g.skeleton_pos[f] = Some(base + k);
        }
        g.skeleton_offset.push(base + g.edges[id].faces.len());
    }
    g.skeleton = vertical_first;
    Ok(g)
}

impl GridHierarchy {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    /// Coarse block counts per axis (1 on unused axes).
    pub fn coarse(&self) -> [usize; 3] {
        self.coarse
    }

    /// Fine cells per block and axis.
    pub fn n(&self) -> [usize; 3] {
        self.n
    }

    pub fn fine(&self) -> [usize; 3] {
        self.fine
    }

    pub fn h(&self) -> [f64; 3] {
        self.h
    }

    pub fn coarse_h(&self) -> [f64; 3] {
        let mut hh = [1.0; 3];
        for (a, v) in hh.iter_mut().enumerate().take(self.dim) {
            *v = self.extents[a] / self.coarse[a] as f64;
        }
        hh
    }

    pub fn num_cells(&self) -> usize {
        self.fine.iter().product()
    }

    pub fn num_blocks(&self) -> usize {
        self.coarse.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn face_area(&self, axis: usize) -> f64 {
        self.cell_volume() / self.h[axis]
    }

    pub fn cell_index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.fine[0] * (ijk[1] + self.fine[1] * ijk[2])
    }

    pub fn cell_coords(&self, c: usize) -> [usize; 3] {
        let i = c % self.fine[0];
        let r = c / self.fine[0];
        [i, r % self.fine[1], r / self.fine[1]]
    }

    pub fn cell_center(&self, c: usize) -> [f64; 3] {
        let ijk = self.cell_coords(c);
        let mut x = [0.5; 3];
        for a in 0..3 {
            x[a] = (ijk[a] as f64 + 0.5) * self.h[a];
        }
        x
    }

    pub fn block_index(&self, b: [usize; 3]) -> usize {
        b[0] + self.coarse[0] * (b[1] + self.coarse[1] * b[2])
    }

    pub fn block_coords(&self, b: usize) -> [usize; 3] {
        let i = b % self.coarse[0];
        let r = b / self.coarse[0];
        [i, r % self.coarse[1], r / self.coarse[1]]
    }

    pub fn block_of_cell(&self, c: usize) -> usize {
        let ijk = self.cell_coords(c);
        self.block_index([ijk[0] / self.n[0], ijk[1] / self.n[1], ijk[2] / self.n[2]])
    }

    pub fn block_box(&self, b: usize) -> CellBox {
        let bc = self.block_coords(b);
        let lo = [bc[0] * self.n[0], bc[1] * self.n[1], bc[2] * self.n[2]];
        CellBox::new(lo, [lo[0] + self.n[0], lo[1] + self.n[1], lo[2] + self.n[2]])
    }

    pub fn block_cells(&self, b: usize) -> Vec<usize> {
        self.block_box(b).iter().map(|c| self.cell_index(c)).collect()
    }

    /// The `2·dim` coarse edges bounding block `b`, ordered (axis, low side first).
    pub fn block_edges(&self, b: usize) -> Vec<usize> {
        let bc = self.block_coords(b);
        let mut out = Vec::with_capacity(2 * self.dim);
        for axis in 0..self.dim {
            for side in 0..2 {
                let mut c = bc;
                c[axis] += side;
                out.push(self.edge_index(axis, c));
            }
        }
        out
    }

    fn faces_on_axis(&self, axis: usize) -> usize {
        let mut dims = self.fine;
        dims[axis] += 1;
        dims.iter().product()
    }

    pub fn num_faces(&self) -> usize {
        self.face_offset[3]
    }

    pub fn face_id(&self, axis: usize, ijk: [usize; 3]) -> usize {
        let mut dims = self.fine;
        dims[axis] += 1;
        self.face_offset[axis] + ijk[0] + dims[0] * (ijk[1] + dims[1] * ijk[2])
    }

    pub fn face_axis(&self, f: usize) -> usize {
        (0..self.dim).find(|&a| f < self.face_offset[a + 1]).expect("face id out of range")
    }

    pub fn face_coords(&self, f: usize) -> (usize, [usize; 3]) {
        let axis = self.face_axis(f);
        let mut dims = self.fine;
        dims[axis] += 1;
        let l = f - self.face_offset[axis];
        let i = l % dims[0];
        let r = l / dims[0];
        (axis, [i, r % dims[1], r / dims[1]])
    }

    /// Cells on the low and high side of a face.
    pub fn face_cells(&self, f: usize) -> (Option<usize>, Option<usize>) {
        let (axis, ijk) = self.face_coords(f);
        let minus = (ijk[axis] > 0).then(|| {
            let mut m = ijk;
            m[axis] -= 1;
            self.cell_index(m)
        });
        let plus = (ijk[axis] < self.fine[axis]).then(|| self.cell_index(ijk));
        (minus, plus)
    }

    pub fn is_domain_boundary_face(&self, f: usize) -> bool {
        let (m, p) = self.face_cells(f);
        m.is_none() || p.is_none()
    }

    /// Faces of cell `c` as `(face, outward sign)`, ordered (axis, low side first).
    pub fn cell_faces(&self, c: usize) -> Vec<(usize, f64)> {
        let ijk = self.cell_coords(c);
        let mut out = Vec::with_capacity(2 * self.dim);
        for axis in 0..self.dim {
            out.push((self.face_id(axis, ijk), -1.0));
            let mut p = ijk;
            p[axis] += 1;
            out.push((self.face_id(axis, p), 1.0));
        }
        out
    }

    pub fn edges(&self) -> &[CoarseEdge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> &CoarseEdge {
        &self.edges[id]
    }

    pub fn edge_index(&self, axis: usize, c: [usize; 3]) -> usize {
        let mut dims = self.coarse;
        dims[axis] += 1;
        self.edge_offset[axis] + c[0] + dims[0] * (c[1] + dims[1] * c[2])
    }

    fn edge_face_box_of(&self, e: &CoarseEdge) -> CellBox {
        let mut lo = [0; 3];
        let mut hi = [1; 3];
        for a in 0..3 {
            if a == e.axis {
                lo[a] = e.coarse[a] * self.n[a];
                hi[a] = lo[a] + 1;
            } else {
                lo[a] = e.coarse[a] * self.n[a];
                hi[a] = lo[a] + self.n[a];
            }
        }
        CellBox::new(lo, hi)
    }

    /// Box of face coordinates (plus-side convention) making up an edge.
    pub fn edge_face_box(&self, id: usize) -> CellBox {
        self.edge_face_box_of(&self.edges[id])
    }

    /// Interior coarse edges in skeleton order (x-normal first).
    pub fn skeleton_edges(&self) -> &[usize] {
        &self.skeleton
    }

    pub fn num_skeleton_faces(&self) -> usize {
        *self.skeleton_offset.last().unwrap()
    }

    /// Range of skeleton face positions belonging to the s-th interior edge.
    pub fn skeleton_range(&self, s: usize) -> std::ops::Range<usize> {
        self.skeleton_offset[s]..self.skeleton_offset[s + 1]
    }

    pub fn skeleton_position(&self, face: usize) -> Option<usize> {
        self.skeleton_pos[face]
    }

    /// Skeleton face positions on the boundary of block `b`, with the edges
    /// they belong to, ordered as [`Self::block_edges`].
    pub fn block_interface(&self, b: usize) -> Vec<(usize, std::ops::Range<usize>)> {
        self.block_edges(b)
            .into_iter()
            .filter_map(|e| self.edges[e].skeleton.map(|s| (e, self.skeleton_range(s))))
            .collect()
    }
}

/// The two-block neighborhood of an interior edge.
pub fn neighborhood(grid: &GridHierarchy, edge: usize) -> Result<Region> {
    let e = grid.edge(edge);
    let (Some(m), Some(p)) = (e.minus, e.plus) else {
        return Err(MortarError::BoundaryEdge(edge));
    };
    let a = grid.block_box(m);
    let b = grid.block_box(p);
    let mut lo = [0; 3];
    let mut hi = [0; 3];
    for k in 0..3 {
        lo[k] = a.lo[k].min(b.lo[k]);
        hi[k] = a.hi[k].max(b.hi[k]);
    }
    Ok(Region { edge, cells: CellBox::new(lo, hi), oversampled: false })
}

/// Box around an interior edge extended per the d-values, clipped to the domain.
pub fn oversample_region(grid: &GridHierarchy, edge: usize, d: &DMatrix) -> Result<Region> {
    let e = grid.edge(edge);
    if !e.is_interior() {
        return Err(MortarError::BoundaryEdge(edge));
    }
    let (perp, tang) = d.for_axis(e.axis);
    if perp == 0 {
        return Err(MortarError::EmptyRegion { edge, reason: "zero extent normal to the edge".into() });
    }
    let faces = grid.edge_face_box(edge);
    let fine = grid.fine();
    let mut lo = [0; 3];
    let mut hi = [1; 3];
    for a in 0..grid.dim() {
        if a == e.axis {
            let x = faces.lo[a];
            lo[a] = x.saturating_sub(perp);
            hi[a] = (x + perp).min(fine[a]);
        } else {
            lo[a] = faces.lo[a].saturating_sub(tang);
            hi[a] = (faces.hi[a] + tang).min(fine[a]);
        }
    }
    let cells = CellBox::new(lo, hi);
    let oversampled = cells != neighborhood(grid, edge)?.cells;
    Ok(Region { edge, cells, oversampled })
}

/// Interior edges grouped by (normal axis, plane parity). Neighborhoods within
/// a group are pairwise disjoint.
pub fn color_classes(grid: &GridHierarchy) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    for axis in 0..grid.dim() {
        for parity in 0..2 {
            let g: Vec<usize> = grid
                .skeleton_edges()
                .iter()
                .copied()
                .filter(|&e| grid.edge(e).axis == axis && grid.edge(e).plane() % 2 == parity)
                .collect();
            if !g.is_empty() {
                groups.push(g);
            }
        }
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn g2(nx: usize, ny: usize, n: usize) -> GridHierarchy {
        build_grids(&[1.0, 1.0], &[nx, ny], &[n, n]).unwrap()
    }

    #[test]
    fn counts_small() {
        let g = g2(2, 2, 2);
        assert_eq!(g.num_blocks(), 4);
        assert_eq!(g.skeleton_edges().len(), 4);
        assert_eq!(g.num_cells(), 16);
        assert_eq!(g.num_skeleton_faces(), 8);
    }

    #[test]
    fn ten_by_ten_skeleton() {
        let g = g2(10, 10, 20);
        assert_eq!(g.skeleton_edges().len(), 180);
    }

    #[test]
    fn four_by_four_brute_force() {
        let g = g2(4, 4, 5);
        // count block pairs sharing a side by brute force
        let mut pairs = 0;
        for a in 0..16 {
            for b in (a + 1)..16 {
                let (ca, cb) = (g.block_coords(a), g.block_coords(b));
                let d: usize = (0..2).map(|k| ca[k].abs_diff(cb[k])).sum();
                if d == 1 {
                    pairs += 1;
                }
            }
        }
        assert_eq!(pairs, 24);
        assert_eq!(g.skeleton_edges().len(), pairs);
    }

    #[test]
    fn rejects_zero_counts() {
        assert!(build_grids(&[1.0, 1.0], &[0, 2], &[2, 2]).is_err());
        assert!(build_grids(&[1.0, -1.0], &[2, 2], &[2, 2]).is_err());
        assert!(build_grids(&[1.0], &[2], &[2]).is_err());
    }

    #[test]
    fn vertical_neighborhood_shape() {
        let g = g2(2, 2, 3);
        let e = g.skeleton_edges()[0];
        assert_eq!(g.edge(e).axis, 0);
        let r = neighborhood(&g, e).unwrap();
        assert_eq!(r.cells.extent(0), 6);
        assert_eq!(r.cells.extent(1), 3);
        assert_eq!(r.num_cells(), 2 * 9);
    }

    #[test]
    fn boundary_edge_rejected() {
        let g = g2(2, 2, 2);
        let b = g.edges().iter().find(|e| !e.is_interior()).unwrap().id;
        assert!(neighborhood(&g, b).is_err());
    }

    #[test]
    fn case_a_box_size() {
        let g = g2(10, 10, 10);
        let n = 10;
        let e = g.edge_index(0, [5, 5, 0]);
        let r = oversample_region(&g, e, &DMatrix::new(n, 1, 1, n)).unwrap();
        assert_eq!((r.cells.extent(0), r.cells.extent(1)), (20, 12));
        assert!(r.oversampled);
        let case1 = oversample_region(&g, e, &DMatrix::new(n, 0, 0, n)).unwrap();
        assert_eq!(case1, neighborhood(&g, e).unwrap());
    }

    #[test]
    fn oversample_clips_at_boundary() {
        let g = g2(3, 3, 4);
        let e = g.edge_index(0, [1, 0, 0]);
        let r = oversample_region(&g, e, &DMatrix::new(4, 1, 1, 4)).unwrap();
        assert_eq!(r.cells.lo[1], 0);
        assert_eq!(r.cells.hi[1], 5);
        assert!(oversample_region(&g, e, &DMatrix::new(0, 1, 1, 0)).is_err());
    }

    #[test]
    fn colors_disjoint_and_cover() {
        let g = g2(4, 4, 2);
        let groups = color_classes(&g);
        assert_eq!(groups.len(), 4);
        let mut seen = HashSet::new();
        for grp in &groups {
            for (i, &a) in grp.iter().enumerate() {
                assert!(seen.insert(a));
                let ba: HashSet<usize> = g.edge(a).blocks().collect();
                for &b in &grp[i + 1..] {
                    assert!(g.edge(b).blocks().all(|x| !ba.contains(&x)));
                }
            }
        }
        assert_eq!(seen.len(), g.skeleton_edges().len());

        let g = g2(2, 1, 2);
        assert_eq!(color_classes(&g), vec![vec![g.skeleton_edges()[0]]]);
    }

    #[test]
    fn index_maps_round_trip() {
        let g = build_grids(&[1.0, 2.0, 1.5], &[3, 3, 3], &[2, 1, 3]).unwrap();
        for c in 0..g.num_cells() {
            assert_eq!(g.cell_index(g.cell_coords(c)), c);
            assert!(g.block_cells(g.block_of_cell(c)).contains(&c));
        }
        for f in 0..g.num_faces() {
            let (a, ijk) = g.face_coords(f);
            assert_eq!(g.face_id(a, ijk), f);
        }
        assert_eq!(color_classes(&g).len(), 6);
    }

    #[test]
    fn region_faces() {
        let g = g2(2, 1, 2);
        let r = neighborhood(&g, g.skeleton_edges()[0]).unwrap();
        // 4x2 cells: 3*2 x-faces + 4*1 y-faces inside
        assert_eq!(r.interior_faces(&g).len(), 10);
        assert!(r.boundary_faces(&g).is_empty());
        assert_eq!(r.covered_edges(&g).len(), 7);
    }
}
