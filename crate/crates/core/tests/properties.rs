mod common;

use common::*;
use mortar_core::mortar::offline_basis;
use mortar_core::perm::{load_raw_field, write_raw_field, Layout};
use mortar_core::twophase::{frac_flow, transport_step};
use mortar_core::{
    assemble_all, build_grids, fine_reference_solve, multiscale_solve, perm, FluidModel, PressureSolver, TwoPhaseState, WellSet,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn raw_field_round_trip(nx in 1usize..7, ny in 1usize..7, seed in 0u64..1000, ascii in any::<bool>()) {
        let g = build_grids(&[1.0, 1.0], &[1, 1], &[nx, ny]).unwrap();
        let k = perm::log_uniform(&g, 1e-3, 1e5, seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field");
        let layout = if ascii { Layout::Ascii } else { Layout::BinaryLe };
        write_raw_field(&path, &k, layout).unwrap();
        let back = load_raw_field(&path, [nx, ny, 1], layout, None).unwrap();
        prop_assert_eq!(back.dims(), k.dims());
        prop_assert_eq!(back.kappa(), k.kappa());
    }

    #[test]
    fn interior_edge_count(a in 1usize..8, b in 1usize..8, n in 1usize..4) {
        let g = build_grids(&[1.0, 1.0], &[a, b], &[n, n]).unwrap();
        prop_assert_eq!(g.skeleton_edges().len(), (a - 1) * b + a * (b - 1));
        prop_assert_eq!(g.num_skeleton_faces(), ((a - 1) * b + a * (b - 1)) * n);
    }

    #[test]
    fn fractional_flow_is_monotone(s in 0.0f64..1.0, ds in 0.0f64..0.1, mu_o in 0.2f64..20.0) {
        let fluid = FluidModel { mu_o, ..FluidModel::default() };
        let (lt, f) = frac_flow(s, &fluid);
        let (_, f2) = frac_flow((s + ds).min(1.0), &fluid);
        prop_assert!(lt > 0.0);
        prop_assert!((0.0..=1.0).contains(&f));
        prop_assert!(f2 >= f);
    }

    #[test]
    fn dtn_is_symmetric_semidefinite(seed in 0u64..500, block in 0usize..9) {
        let g = grid2([3, 3], [3, 3]);
        let k = perm::log_uniform(&g, 1.0, 1e4, seed).unwrap();
        let sys = &assemble_all(&g, &k).unwrap()[block];
        let d = sys.dtn();
        let n = d.nrows();
        let scale = (0..n).map(|i| d[(i, i)]).fold(0.0, f64::max);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((d[(i, j)] - d[(j, i)]).abs() <= 1e-12 * scale);
            }
        }
        let (ev, _) = eigen(d);
        prop_assert!(ev.iter().all(|&l| l >= -1e-12 * scale));
    }

    #[test]
    fn multiscale_fluxes_are_conservative(seed in 0u64..500, kb in 1usize..3) {
        let g = grid2([3, 3], [4, 4]);
        let k = perm::log_uniform(&g, 1.0, 1e4, seed).unwrap();
        let q = corner_source(&g);
        let ms = multiscale_solve(&g, &offline_basis(&g, kb).unwrap(), &assemble_all(&g, &k).unwrap(), &q).unwrap();
        prop_assert!(ms.flux.conservation_error(&q) <= 1e-10);
        let r = fine_reference_solve(&g, &k, &q).unwrap();
        prop_assert!(r.cell_fluxes(&g).conservation_error(&q) <= 1e-10);
    }

    #[test]
    fn transport_conserves_water_and_bounds(seed in 0u64..500, dt in 0.5f64..20.0, s0 in 0.0f64..1.0) {
        let g = build_grids(&[100.0, 100.0], &[2, 2], &[4, 4]).unwrap();
        let k = perm::log_uniform(&g, 1.0, 1e3, seed).unwrap();
        let fluid = FluidModel::default();
        let wells = WellSet::five_spot(&g, 1.0).unwrap();
        let mut st = TwoPhaseState::new(&g, s0);
        let flux = PressureSolver::Reference.velocity(&g, &k, &fluid, &st.s, &wells).unwrap();
        let rep = transport_step(&mut st, &flux, &wells, dt, &g, &k, &fluid).unwrap();
        prop_assert!(rep.balance_error <= 1e-8);
        prop_assert!(rep.clipped.abs() <= 1e-8 * g.num_cells() as f64 * g.cell_volume() * k.phi()[0]);
        prop_assert!(st.s.iter().all(|s| (0.0..=1.0).contains(s)));
    }
}
