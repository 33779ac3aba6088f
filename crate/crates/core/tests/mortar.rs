mod common;

use common::*;
use faer::Mat;
use mortar_core::hybrid::half_trans;
use mortar_core::linalg::{dot, SymmetricSolver};
use mortar_core::mortar::{
    assemble_skeleton, dual_norm_sq, errors, offline_basis, recover_solution, residual_on_skeleton, solve_interface, velocity_norm_sq,
};
use mortar_core::{
    assemble_all, assemble_interface, fine_reference_solve, multiscale_solve, perm, CellFluxes, GridHierarchy, InterfaceOperator,
    MortarSpace, OnlineContext, PermField,
};

fn dense_skeleton(g: &GridHierarchy, op: &mortar_core::mortar::SkeletonOperator) -> Mat<f64> {
    let n = g.num_skeleton_faces();
    Mat::from_fn(n, n, |i, j| {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        op.apply(&e)[i]
    })
}

fn prolongation(g: &GridHierarchy, space: &MortarSpace) -> Mat<f64> {
    let cols: Vec<Vec<f64>> = (0..space.dof())
        .map(|k| {
            let mut c = vec![0.0; space.dof()];
            c[k] = 1.0;
            space.prolong(g, &c)
        })
        .collect();
    Mat::from_fn(g.num_skeleton_faces(), space.dof(), |i, j| cols[j][i])
}

#[test]
fn offline_dof_counts_and_zero_mean_linear_mode() {
    let g = grid2([10, 10], [20, 20]);
    assert_eq!(offline_basis(&g, 1).unwrap().dof(), 180);
    let s2 = offline_basis(&g, 2).unwrap();
    assert_eq!(s2.dof(), 360);
    for e in &s2.edges {
        assert!(e[1].iter().sum::<f64>().abs() < 1e-14);
        assert!((dot(&e[0], &e[0]) - 1.0).abs() < 1e-14 && dot(&e[0], &e[1]).abs() < 1e-14);
    }
}

/// Cell pressures plus skeleton multipliers: two-point couplings inside blocks,
/// half transmissibilities to the multiplier across the skeleton.
fn monolithic(g: &GridHierarchy, k: &PermField) -> (Mat<f64>, usize) {
    let nc = g.num_cells();
    let n = nc + g.num_skeleton_faces();
    let mut m = Mat::<f64>::zeros(n, n);
    for f in 0..g.num_faces() {
        let (Some(a), Some(b)) = g.face_cells(f) else { continue };
        let axis = g.face_axis(f);
        let (ta, tb) = (half_trans(g, k.kappa()[a], axis), half_trans(g, k.kappa()[b], axis));
        match g.skeleton_position(f) {
            Some(j) => {
                for (c, t) in [(a, ta), (b, tb)] {
                    m[(c, c)] += t;
                    m[(nc + j, nc + j)] += t;
                    m[(c, nc + j)] -= t;
                    m[(nc + j, c)] -= t;
                }
            }
            None => {
                let t = harmonic(ta, tb);
                m[(a, a)] += t;
                m[(b, b)] += t;
                m[(a, b)] -= t;
                m[(b, a)] -= t;
            }
        }
    }
    (m, nc)
}

#[test]
fn two_block_operator_equals_dense_schur_complement() {
    let g = grid2([2, 1], [4, 4]);
    for k in [PermField::constant(&g, 1.0), perm::log_uniform(&g, 1.0, 1e3, 2).unwrap()] {
        let (m, nc) = monolithic(&g, &k);
        let ns = g.num_skeleton_faces();
        let kpp = Mat::from_fn(nc, nc, |i, j| m[(i, j)]);
        let mut schur = Mat::from_fn(ns, ns, |i, j| m[(nc + i, nc + j)]);
        for j in 0..ns {
            let col: Vec<f64> = (0..nc).map(|i| m[(i, nc + j)]).collect();
            let y = dense_solve(&kpp, &col);
            for i in 0..ns {
                schur[(i, j)] -= (0..nc).map(|c| m[(nc + i, c)] * y[c]).sum::<f64>();
            }
        }
        let q = corner_source(&g);
        let y = dense_solve(&kpp, &q);
        let g_oracle: Vec<f64> = (0..ns).map(|i| -(0..nc).map(|c| m[(nc + i, c)] * y[c]).sum::<f64>()).collect();

        let systems = assemble_all(&g, &k).unwrap();
        let op = assemble_skeleton(&g, &systems, &q).unwrap();
        let a = dense_skeleton(&g, &op);
        let scale = (0..ns).map(|i| schur[(i, i)]).fold(0.0, f64::max);
        for i in 0..ns {
            for j in 0..ns {
                assert!((a[(i, j)] - schur[(i, j)]).abs() <= 1e-10 * scale);
            }
        }
        assert!(rel_diff(&op.g, &g_oracle) < 1e-10, "{:?} {:?}", &op.g[..3], &g_oracle[..3]);

        // constant basis: the only coarse mode is the kernel, so A_H = bᵀ S b = 0;
        // with the linear mode added, A_H = Pᵀ S P
        for kb in [1, 2] {
            let space = offline_basis(&g, kb).unwrap();
            let coarse = assemble_interface(&g, &space, &systems, &q).unwrap();
            let b = &space.edges[0];
            for (x, bx) in b.iter().enumerate() {
                for (y, by) in b.iter().enumerate() {
                    let sb: f64 = (0..ns).map(|i| bx[i] * (0..ns).map(|j| schur[(i, j)] * by[j]).sum::<f64>()).sum();
                    assert!((coarse.a[(x, y)] - sb).abs() <= 1e-10 * scale);
                }
                assert!((coarse.g[x] - dot(bx, &g_oracle)).abs() <= 1e-10 * scale);
            }
        }
    }
}

#[test]
fn coarse_operator_is_galerkin_projection_and_symmetric() {
    let g = grid2([3, 3], [4, 4]);
    let k = perm::log_uniform(&g, 1.0, 1e4, 7).unwrap();
    let q = corner_source(&g);
    let systems = assemble_all(&g, &k).unwrap();
    let s = dense_skeleton(&g, &assemble_skeleton(&g, &systems, &q).unwrap());
    let space = offline_basis(&g, 2).unwrap();
    let op = assemble_interface(&g, &space, &systems, &q).unwrap();
    let p = prolongation(&g, &space);
    let pap = p.transpose() * &s * &p;
    let n = space.dof();
    let norm = (0..n).map(|i| op.a[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..n {
            assert!((op.a[(i, j)] - pap[(i, j)]).abs() <= 1e-10 * norm);
            assert!((op.a[(i, j)] - op.a[(j, i)]).abs() <= 1e-12 * norm);
        }
    }

    let zero = assemble_interface(&g, &space, &systems, &vec![0.0; g.num_cells()]).unwrap();
    assert!(zero.g.iter().all(|&v| v == 0.0));
    let lam = solve_interface(&InterfaceOperator { g: vec![0.0; n], ..zero }).unwrap();
    assert!(lam.iter().all(|&v| v == 0.0));
}

#[test]
fn mirrored_problem_gives_antisymmetric_multipliers() {
    let g = grid2([4, 4], [5, 5]);
    let [nx, ny, _] = g.fine();
    let base = perm::log_uniform(&g, 1.0, 1e4, 10).unwrap();
    let kappa: Vec<f64> = (0..g.num_cells())
        .map(|c| {
            let [i, j, _] = g.cell_coords(c);
            base.kappa()[g.cell_index([i.min(nx - 1 - i), j, 0])]
        })
        .collect();
    let k = PermField::from_kappa([nx, ny, 1], kappa).unwrap();
    let mut q = vec![0.0; g.num_cells()];
    q[g.cell_index([2, 13, 0])] = 1.0;
    q[g.cell_index([nx - 3, 13, 0])] = -1.0;
    let systems = assemble_all(&g, &k).unwrap();
    let ms = multiscale_solve(&g, &offline_basis(&g, 2).unwrap(), &systems, &q).unwrap();
    let scale = max_abs(&ms.lambda);
    for f in 0..g.num_faces() {
        let Some(pos) = g.skeleton_position(f) else { continue };
        let (axis, [i, j, _]) = g.face_coords(f);
        let mirror = if axis == 0 { g.face_id(0, [nx - i, j, 0]) } else { g.face_id(1, [nx - 1 - i, j, 0]) };
        let mp = g.skeleton_position(mirror).unwrap();
        assert!((ms.lambda[pos] + ms.lambda[mp]).abs() <= 1e-10 * scale);
    }
}

#[test]
fn recovery_fields_and_conservation() {
    let g = grid2([4, 4], [5, 5]);
    let k = perm::model1_like(&g, 1, 1e4).unwrap();
    let systems = assemble_all(&g, &k).unwrap();
    let zc = vec![0.0; g.num_cells()];
    let z = recover_solution(&g, &systems, &vec![0.0; g.num_skeleton_faces()], &zc).unwrap();
    assert!(max_abs(&z.p) == 0.0 && max_abs(&z.flux.out) == 0.0);

    let q = mortar_core::corner_sources(&g, 4.0);
    let op = assemble_skeleton(&g, &systems, &q).unwrap();
    let lam = op.solve().unwrap();
    let ms = recover_solution(&g, &systems, &lam, &q).unwrap();
    assert!(ms.flux.conservation_error(&q) <= 1e-10);
    let r = fine_reference_solve(&g, &k, &q).unwrap();
    let (ep, eu) = errors(&g, &k, &ms.p, &ms.flux, &r.p, &r.cell_fluxes(&g)).unwrap();
    assert!(ep <= 1e-10 && eu <= 1e-10, "{ep:e} {eu:e}");

    let coarse = multiscale_solve(&g, &offline_basis(&g, 1).unwrap(), &systems, &q).unwrap();
    assert!(coarse.flux.conservation_error(&q) <= 1e-10);
}

#[test]
fn error_measures() {
    let g = grid2([2, 2], [4, 4]);
    let k = perm::log_uniform(&g, 1.0, 1e2, 3).unwrap();
    let q = corner_source(&g);
    let r = fine_reference_solve(&g, &k, &q).unwrap();
    let u = r.cell_fluxes(&g);
    assert_eq!(errors(&g, &k, &r.p, &u, &r.p, &u).unwrap(), (0.0, 0.0));
    let p2: Vec<f64> = r.p.iter().map(|v| 2.0 * v).collect();
    let mut u2 = u.clone();
    u2.scale(2.0);
    let (ep, eu) = errors(&g, &k, &p2, &u2, &r.p, &u).unwrap();
    assert!((ep - 1.0).abs() < 1e-14 && (eu - 1.0).abs() < 1e-14);
}

#[test]
fn midpoint_norm_matches_exact_integration_of_the_lowest_order_field() {
    // Simpson's rule integrates the square of the piecewise-linear normal
    // components exactly; it exceeds the midpoint value by |K|(u_r - u_l)²/12.
    let g = grid2([2, 2], [3, 3]);
    let k = perm::log_uniform(&g, 0.5, 20.0, 4).unwrap();
    let mut u = CellFluxes::zeros(&g);
    for (i, v) in u.out.iter_mut().enumerate() {
        *v = ((i * 31 % 17) as f64 - 8.0) * 0.1;
    }
    let vol = g.cell_volume();
    let mut exact = 0.0;
    let mut jump = 0.0;
    for c in 0..g.num_cells() {
        for a in 0..2 {
            let area = g.face_area(a);
            let (ul, ur) = (-u.cell(c)[2 * a] / area, u.cell(c)[2 * a + 1] / area);
            let mid = 0.5 * (ul + ur);
            exact += vol * (ul * ul + 4.0 * mid * mid + ur * ur) / 6.0 / k.kappa()[c];
            jump += vol * (ur - ul) * (ur - ul) / 12.0 / k.kappa()[c];
        }
    }
    let mp = velocity_norm_sq(&g, &k, &u);
    assert!((mp - (exact - jump)).abs() <= 1e-12 * exact);
}

#[test]
fn skeleton_residual_values() {
    let g = grid2([3, 3], [4, 4]);
    let k = perm::log_uniform(&g, 1.0, 1e4, 5).unwrap();
    let q = corner_source(&g);
    let systems = assemble_all(&g, &k).unwrap();
    let op = assemble_skeleton(&g, &systems, &q).unwrap();
    let zero = residual_on_skeleton(&g, &systems, &vec![0.0; op.dim()], &q).unwrap();
    assert!(rel_diff(&zero, &op.g) < 1e-14);
    let lam = op.solve().unwrap();
    let r = residual_on_skeleton(&g, &systems, &lam, &q).unwrap();
    assert!(max_abs(&r) <= 1e-10 * max_abs(&op.g));
    // matches g − aλ at a generic point
    let x: Vec<f64> = (0..op.dim()).map(|i| (i as f64 * 0.3).sin()).collect();
    assert!(rel_diff(&residual_on_skeleton(&g, &systems, &x, &q).unwrap(), &op.residual(&x)) < 1e-10);
}

#[test]
fn dual_norm_matches_dense_supremum() {
    let g = grid2([3, 3], [4, 4]);
    let k = perm::log_uniform(&g, 1.0, 1e4, 12).unwrap();
    let q = corner_source(&g);
    let ctx = OnlineContext::new(&g, &k, &q).unwrap();
    let sol = ctx.solve(&ctx.offline_space(1).unwrap()).unwrap();
    let r = ctx.residual(&sol.lambda).unwrap();
    for s in 0..g.skeleton_edges().len() {
        let d = &ctx.skeleton.edge_blocks[s];
        let rs = ctx.edge_residual(&r, s);
        let (ev, v) = eigen(d);
        let top = ev.iter().fold(0.0f64, |m, &l| m.max(l));
        let mut sup = 0.0;
        for (kk, &l) in ev.iter().enumerate() {
            if l > 1e-12 * top {
                let c: f64 = (0..rs.len()).map(|i| v[(i, kk)] * rs[i]).sum();
                sup += c * c / l;
            }
        }
        let dn = dual_norm_sq(&ctx.edge_solvers[s], rs);
        assert!((dn - sup).abs() <= 1e-10 * sup.max(f64::MIN_POSITIVE), "edge {s}: {dn:e} vs {sup:e}");
        // no trial direction beats the supremum
        for t in 0..5 {
            let w: Vec<f64> = (0..rs.len()).map(|i| ((i + 3 * t) as f64 * 1.7).sin()).collect();
            let dw: f64 = (0..rs.len()).map(|i| w[i] * (0..rs.len()).map(|j| d[(i, j)] * w[j]).sum::<f64>()).sum();
            let ratio = dot(rs, &w).powi(2) / dw;
            assert!(ratio <= sup * (1.0 + 1e-10));
        }
        let solver = SymmetricSolver::new(d.as_ref());
        let best = solver.solve(rs);
        assert!((dot(rs, &best) - sup).abs() <= 1e-10 * sup);
    }
}
