mod common;

use common::*;
use faer::Mat;
use mortar_core::grid::CellBox;
use mortar_core::hybrid::{assemble_fine_hybrid, assemble_subdomain, element_matrix, recenter, SubdomainSystem};
use mortar_core::mortar::{assemble_skeleton, errors};
use mortar_core::{assemble_all, build_grids, fine_reference_solve, perm, GridHierarchy, PermField};

#[test]
fn one_cell_block_mixed_matrix_by_hand() {
    // unit cells, two blocks of one cell each
    let g = build_grids(&[2.0, 1.0], &[2, 1], &[1, 1]).unwrap();
    let k = PermField::from_kappa([2, 1, 1], vec![2.0, 1.0]).unwrap();
    let sys = assemble_subdomain(&g, &k, 0).unwrap();
    let (m, faces) = sys.mixed_matrix(&g, &k);
    assert_eq!(m.nrows(), 5);
    // |K| = 1, κ = 2: each edge function contributes |K|/2 · κ⁻¹ = 1/4
    let div = [1.0, -1.0, 1.0, -1.0];
    for (k, (f, _)) in g.cell_faces(0).into_iter().enumerate() {
        let i = faces.binary_search(&f).unwrap();
        assert_eq!(m[(i, i)], 0.25);
        assert_eq!(m[(i, 4)], div[k]);
        assert_eq!(m[(4, i)], div[k]);
        for j in 0..4 {
            if j != i {
                assert_eq!(m[(i, j)], 0.0);
            }
        }
    }
    assert_eq!(m[(4, 4)], 0.0);

    let k2 = PermField::from_kappa([2, 1, 1], vec![6.0, 1.0]).unwrap();
    let (m2, _) = assemble_subdomain(&g, &k2, 0).unwrap().mixed_matrix(&g, &k2);
    for i in 0..4 {
        assert!((m2[(i, i)] - m[(i, i)] / 3.0).abs() < 1e-15);
        assert_eq!(m2[(i, 4)], m[(i, 4)]);
    }
}

#[test]
fn two_by_two_block_has_twelve_faces_and_four_cells() {
    let g = build_grids(&[1.0, 1.0], &[2, 1], &[2, 2]).unwrap();
    let k = PermField::constant(&g, 1.0);
    let (m, faces) = assemble_subdomain(&g, &k, 0).unwrap().mixed_matrix(&g, &k);
    assert_eq!(faces.len(), 12);
    assert_eq!(m.nrows(), 16);
}

/// Dense solve of the block's mixed system: closed faces carry zero velocity,
/// interface faces take λ as a natural condition.
fn dense_block(g: &GridHierarchy, k: &PermField, sys: &SubdomainSystem, lam: &[f64], q: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (m, faces) = sys.mixed_matrix(g, k);
    let nf = faces.len();
    let nc = sys.num_cells();
    let keep: Vec<usize> = (0..nf).filter(|&i| !g.is_domain_boundary_face(faces[i])).chain(nf..nf + nc).collect();
    let a = Mat::from_fn(keep.len(), keep.len(), |i, j| m[(keep[i], keep[j])]);
    let mut rhs = vec![0.0; nf + nc];
    for (lc, &c) in sys.cells().iter().enumerate() {
        rhs[nf + lc] = -q[lc];
        for (f, s) in g.cell_faces(c) {
            if let Some(pos) = g.skeleton_position(f) {
                let idx = sys.interface().iter().position(|&p| p == pos).unwrap();
                let i = faces.binary_search(&f).unwrap();
                rhs[i] = -lam[idx] * g.face_area(g.face_axis(f)) * s;
            }
        }
    }
    let b: Vec<f64> = keep.iter().map(|&i| rhs[i]).collect();
    let x = dense_solve(&a, &b);
    let mut full = vec![0.0; nf + nc];
    for (i, &r) in keep.iter().enumerate() {
        full[r] = x[i];
    }
    let mut out = Vec::new();
    for &c in sys.cells() {
        for (f, s) in g.cell_faces(c) {
            let i = faces.binary_search(&f).unwrap();
            out.push(s * g.face_area(g.face_axis(f)) * full[i]);
        }
    }
    (full[nf..].to_vec(), out)
}

#[test]
fn condensed_block_solve_matches_dense_mixed_solve() {
    let g = grid2([3, 2], [3, 4]);
    let k = perm::log_uniform(&g, 1.0, 1e3, 5).unwrap();
    for block in [0, 4] {
        let sys = assemble_subdomain(&g, &k, block).unwrap();
        let lam: Vec<f64> = (0..sys.interface().len()).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let q: Vec<f64> = (0..sys.num_cells()).map(|i| (i as f64 * 0.37).sin()).collect();
        let st = sys.solve(&lam, &q).unwrap();
        let (p, out) = dense_block(&g, &k, &sys, &lam, &q);
        assert!(rel_diff(&st.p, &p) < 1e-10, "block {block} pressure");
        assert!(rel_diff(&st.out, &out) < 1e-10, "block {block} flux");
    }
}

#[test]
fn linear_trace_gives_constant_unit_velocity() {
    let g = grid2([3, 3], [4, 4]);
    let h = g.h();
    for kappa in [1.0, 3.0] {
        let k = PermField::constant(&g, kappa);
        let sys = assemble_subdomain(&g, &k, 4).unwrap();
        let mut lam = vec![0.0; sys.interface().len()];
        for (f, pos) in (0..g.num_faces()).filter_map(|f| g.skeleton_position(f).map(|p| (f, p))) {
            if let Some(i) = sys.interface().iter().position(|&p| p == pos) {
                let (axis, ijk) = g.face_coords(f);
                lam[i] = if axis == 0 { ijk[0] as f64 * h[0] } else { (ijk[0] as f64 + 0.5) * h[0] };
            }
        }
        let st = sys.solve_dirichlet(&lam).unwrap();
        let (p, out) = dense_block(&g, &k, &sys, &lam, &vec![0.0; sys.num_cells()]);
        assert!(rel_diff(&st.p, &p) < 1e-12);
        for (lc, &c) in sys.cells().iter().enumerate() {
            assert!((st.p[lc] - g.cell_center(c)[0]).abs() < 1e-12);
            let area = g.face_area(0);
            let expect = [kappa * area, -kappa * area, 0.0, 0.0];
            for j in 0..4 {
                assert!((st.out[lc * 4 + j] - expect[j]).abs() < 1e-12, "{:?}", &st.out[lc * 4..lc * 4 + 4]);
                assert!((out[lc * 4 + j] - expect[j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn zero_trace_gives_zero_state_and_solves_are_linear() {
    let g = grid2([2, 2], [5, 3]);
    let k = perm::log_uniform(&g, 1.0, 1e4, 2).unwrap();
    let sys = assemble_subdomain(&g, &k, 3).unwrap();
    let ni = sys.interface().len();
    let z = sys.solve_dirichlet(&vec![0.0; ni]).unwrap();
    assert!(max_abs(&z.p) == 0.0 && max_abs(&z.out) == 0.0);

    let l1: Vec<f64> = (0..ni).map(|i| (i as f64).cos()).collect();
    let l2: Vec<f64> = (0..ni).map(|i| (i as f64 * 0.3).sin() * 10.0).collect();
    let (a, b) = (0.7, -2.5);
    let mix: Vec<f64> = l1.iter().zip(&l2).map(|(x, y)| a * x + b * y).collect();
    let s1 = sys.solve_dirichlet(&l1).unwrap();
    let s2 = sys.solve_dirichlet(&l2).unwrap();
    let sm = sys.solve_dirichlet(&mix).unwrap();
    let comb = |u: &[f64], v: &[f64]| -> Vec<f64> { u.iter().zip(v).map(|(x, y)| a * x + b * y).collect() };
    assert!(rel_diff(&sm.p, &comb(&s1.p, &s2.p)) < 1e-12);
    assert!(rel_diff(&sm.out, &comb(&s1.out, &s2.out)) < 1e-12);

    // zero-divergence response, per cell
    for lc in 0..sys.num_cells() {
        let net: f64 = s1.out[lc * 4..lc * 4 + 4].iter().sum();
        assert!(net.abs() < 1e-12 * max_abs(&s1.out));
    }
}

#[test]
fn source_solve_balances_every_cell() {
    let g = grid2([2, 2], [4, 4]);
    let k = perm::log_uniform(&g, 1.0, 1e4, 9).unwrap();
    let sys = assemble_subdomain(&g, &k, 1).unwrap();
    let q: Vec<f64> = (0..sys.num_cells()).map(|i| if i == 0 { 1.0 } else if i == 5 { -1.0 } else { 0.0 }).collect();
    let st = sys.solve_source(&q).unwrap();
    for lc in 0..sys.num_cells() {
        let net: f64 = st.out[lc * 4..lc * 4 + 4].iter().sum();
        assert!((net - q[lc]).abs() < 1e-12);
    }
}

#[test]
fn unit_dipole_pushes_unit_flux_through_any_cut() {
    let g = grid2([4, 4], [5, 5]);
    for k in [PermField::constant(&g, 1.0), perm::log_uniform(&g, 1.0, 1e4, 3).unwrap()] {
        let mut q = vec![0.0; g.num_cells()];
        q[g.cell_index([2, 13, 0])] = 1.0;
        q[g.cell_index([17, 6, 0])] = -1.0;
        let r = fine_reference_solve(&g, &k, &q).unwrap();
        for cut in [3, 10, 17] {
            let total: f64 = (0..20).map(|j| r.flux.flux[g.face_id(0, [cut, j, 0])]).sum();
            assert!((total - 1.0).abs() < 1e-12, "cut {cut}: {total}");
        }
        let r0 = fine_reference_solve(&g, &k, &vec![0.0; g.num_cells()]).unwrap();
        assert!(max_abs(&r0.p) == 0.0 && max_abs(&r0.flux.flux) == 0.0);
    }
}

#[test]
fn neighbouring_flux_traces_are_equal_and_opposite() {
    let g = grid2([4, 4], [5, 5]);
    let k = perm::log_uniform(&g, 1.0, 1e4, 4).unwrap();
    let q = corner_source(&g);
    let systems = assemble_all(&g, &k).unwrap();
    let lam = assemble_skeleton(&g, &systems, &q).unwrap().solve().unwrap();
    let states: Vec<_> = systems.iter().map(|s| s.solve(&s.gather(&lam), &s.restrict_cells(&q)).unwrap()).collect();
    let mut scale: f64 = 0.0;
    let mut worst: f64 = 0.0;
    for &e in g.skeleton_edges() {
        let ed = g.edge(e);
        let (m, p) = (ed.minus.unwrap(), ed.plus.unwrap());
        let a = systems[m].flux_trace(&g, &states[m], e).unwrap();
        let b = systems[p].flux_trace(&g, &states[p], e).unwrap();
        for (x, y) in a.iter().zip(&b) {
            scale = scale.max(x.abs());
            worst = worst.max((x + y).abs());
        }
    }
    assert!(worst <= 1e-10 * scale, "{worst:e} vs {scale:e}");
}

#[test]
fn element_matrix_matches_hand_condensation() {
    let g = build_grids(&[1.0, 1.0], &[1, 1], &[1, 1]).unwrap();
    // T = 2κ|e|/h = 2 on each face: A = 2I − 2·2/8 · 11ᵀ
    let a = element_matrix(&g, 1.0, &[true; 4]);
    for i in 0..4 {
        for j in 0..4 {
            let want = if i == j { 1.5 } else { -0.5 };
            assert!((a[(i, j)] - want).abs() < 1e-15);
        }
    }
    let c = element_matrix(&g, 1.0, &[true, true, false, false]);
    let want = [[1.0, -1.0, 0.0, 0.0], [-1.0, 1.0, 0.0, 0.0], [0.0; 4], [0.0; 4]];
    for i in 0..4 {
        for j in 0..4 {
            assert!((c[(i, j)] - want[i][j]).abs() < 1e-15);
        }
    }
}

#[test]
fn element_matrix_is_the_schur_complement_of_the_cell_mixed_system() {
    let g = build_grids(&[0.5, 0.25], &[1, 1], &[1, 1]).unwrap();
    let kappa = 3.7;
    let vol = g.cell_volume();
    let sides: Vec<(f64, f64)> = (0..4).map(|k| (if k % 2 == 0 { -1.0 } else { 1.0 }, g.face_area(k / 2))).collect();
    let mut m = Mat::<f64>::zeros(5, 5);
    for (i, &(s, area)) in sides.iter().enumerate() {
        m[(i, i)] = vol / (2.0 * kappa);
        m[(i, 4)] = -s * area;
        m[(4, i)] = -s * area;
    }
    let a = element_matrix(&g, kappa, &[true; 4]);
    for j in 0..4 {
        let mut rhs = vec![0.0; 5];
        rhs[j] = -sides[j].0 * sides[j].1;
        let x = dense_solve(&m, &rhs);
        for i in 0..4 {
            let outward = sides[i].0 * sides[i].1 * x[i];
            assert!((a[(i, j)] + outward).abs() < 1e-12 * a[(j, j)], "{i} {j}");
        }
    }
}

#[test]
fn whole_domain_fine_hybrid_matches_reference() {
    let g = grid2([4, 4], [4, 4]);
    let k = perm::log_uniform(&g, 1.0, 1e2, 6).unwrap();
    let q = corner_source(&g);
    let region = CellBox::new([0, 0, 0], [16, 16, 1]);
    let mut sys = assemble_fine_hybrid(&g, &k, region, Some(&q)).unwrap();
    assert!(sys.is_singular());
    sys.factorize().unwrap();
    let lam = sys.solve(sys.load()).unwrap();
    let (mut p, cf) = sys.recover(&g, &k, &lam, &q);
    recenter(&mut p);
    let r = fine_reference_solve(&g, &k, &q).unwrap();
    let (ep, eu) = errors(&g, &k, &p, &cf, &r.p, &r.cell_fluxes(&g)).unwrap();
    assert!(ep <= 1e-10 && eu <= 1e-10, "{ep:e} {eu:e}");
}

#[test]
fn fine_hybrid_operator_is_symmetric_semidefinite_with_constant_kernel() {
    let g = grid2([2, 2], [3, 3]);
    let k = perm::log_uniform(&g, 1.0, 1e4, 8).unwrap();
    let sys = assemble_fine_hybrid(&g, &k, CellBox::new([0, 0, 0], [6, 6, 1]), None).unwrap();
    let n = sys.faces().len();
    let a = Mat::from_fn(n, n, |i, j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        sys.apply(&e)[i]
    });
    let scale = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..n {
            assert!((a[(i, j)] - a[(j, i)]).abs() <= 1e-14 * scale);
        }
    }
    assert!(max_abs(&sys.apply(&vec![1.0; n])) <= 1e-12 * scale);
    let (ev, _) = eigen(&a);
    assert!(ev.iter().all(|&l| l >= -1e-12 * scale));
    assert_eq!(ev.iter().filter(|&&l| l.abs() <= 1e-10 * scale).count(), 1);

    // closing a Dirichlet side removes the kernel
    let part = assemble_fine_hybrid(&g, &k, CellBox::new([0, 0, 0], [3, 6, 1]), None).unwrap();
    assert!(!part.is_singular());
}

#[test]
fn manufactured_pressure_converges() {
    use std::f64::consts::PI;
    let mut errs = Vec::new();
    for n in [10, 20, 40] {
        let g = build_grids(&[1.0, 1.0], &[2, 2], &[n, n]).unwrap();
        let k = PermField::constant(&g, 1.0);
        let exact: Vec<f64> = (0..g.num_cells())
            .map(|c| {
                let x = g.cell_center(c);
                (PI * x[0]).cos() * (PI * x[1]).cos()
            })
            .collect();
        let q: Vec<f64> = exact.iter().map(|p| 2.0 * PI * PI * p * g.cell_volume()).collect();
        let mut q = q;
        let mean = q.iter().sum::<f64>() / q.len() as f64;
        q.iter_mut().for_each(|v| *v -= mean);
        let r = fine_reference_solve(&g, &k, &q).unwrap();
        let mut ex = exact.clone();
        recenter(&mut ex);
        let e: f64 = r.p.iter().zip(&ex).map(|(a, b)| (a - b) * (a - b) * g.cell_volume()).sum::<f64>().sqrt();
        errs.push(e);
    }
    for w in errs.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!(rate >= 0.9, "{errs:?}");
    }
}

#[test]
fn corner_sources_balance_in_the_reference_solve() {
    let g = grid2([4, 4], [5, 5]);
    let k = perm::model1_like(&g, 1, 1e4).unwrap();
    let q = mortar_core::corner_sources(&g, 4.0);
    assert_eq!(q[g.cell_index([0, 19, 0])], 4.0 * g.cell_volume());
    assert_eq!(q.iter().sum::<f64>(), 0.0);
    let r = fine_reference_solve(&g, &k, &q).unwrap();
    let cf = r.cell_fluxes(&g);
    let total: f64 = (0..g.num_cells()).map(|c| cf.net_outflow(c)).sum();
    assert!(total.abs() < 1e-12);
    assert!(cf.conservation_error(&q) <= 1e-10);
}

#[test]
fn source_and_kappa_scaling() {
    let g = grid2([2, 2], [3, 3]);
    let k = perm::log_uniform(&g, 1.0, 1e2, 1).unwrap();
    let sys = assemble_subdomain(&g, &k, 0).unwrap();
    let q: Vec<f64> = (0..sys.num_cells()).map(|i| (i as f64).sin()).collect();
    let s1 = sys.solve_source(&q).unwrap();
    let s3 = sys.solve_source(&q.iter().map(|v| 3.0 * v).collect::<Vec<_>>()).unwrap();
    assert!(rel_diff(&s3.out, &s1.out.iter().map(|v| 3.0 * v).collect::<Vec<_>>()) < 1e-12);
    assert!(rel_diff(&s3.p, &s1.p.iter().map(|v| 3.0 * v).collect::<Vec<_>>()) < 1e-12);
    let z = sys.solve_source(&vec![0.0; sys.num_cells()]).unwrap();
    assert!(max_abs(&z.out) == 0.0);

    let region = CellBox::new([1, 1, 0], [5, 4, 1]);
    let a1 = assemble_fine_hybrid(&g, &PermField::constant(&g, 1.0), region, None).unwrap();
    let a5 = assemble_fine_hybrid(&g, &PermField::constant(&g, 5.0), region, None).unwrap();
    let x: Vec<f64> = (0..a1.faces().len()).map(|i| (i as f64 * 0.7).cos()).collect();
    let y5: Vec<f64> = a1.apply(&x).iter().map(|v| 5.0 * v).collect();
    assert!(rel_diff(&a5.apply(&x), &y5) < 1e-14);
}

#[test]
fn constant_velocity_trace_has_sign_by_side() {
    let g = build_grids(&[3.0, 1.0], &[3, 1], &[3, 3]).unwrap();
    let k = PermField::constant(&g, 1.0);
    let mid = assemble_subdomain(&g, &k, 1).unwrap();
    // p = -x on both interfaces drives u = (1, 0)
    let mut lam = vec![0.0; g.num_skeleton_faces()];
    for (s, &e) in g.skeleton_edges().iter().enumerate() {
        let x = g.edge(e).coarse[0] as f64;
        lam[g.skeleton_range(s)].iter_mut().for_each(|v| *v = -x);
    }
    let st = mid.solve_dirichlet(&mid.gather(&lam)).unwrap();
    let area = g.face_area(0);
    for &e in g.skeleton_edges() {
        let want = if g.edge(e).coarse[0] == 1 { -1.0 } else { 1.0 };
        for v in mid.flux_trace(&g, &st, e).unwrap() {
            assert!((v / area - want).abs() < 1e-12, "{v}");
        }
    }
    let zero = mid.solve_dirichlet(&vec![0.0; mid.interface().len()]).unwrap();
    assert!(mid.flux_trace(&g, &zero, g.skeleton_edges()[0]).unwrap().iter().all(|&v| v == 0.0));
}
