mod common;

use common::{describe, matrix_plans, random_grid, reference_gs, reference_jacobi};
use wavefront_stencil::grid::{create_grid, InitPattern};
use wavefront_stencil::kernels::StencilCoeffs;
use wavefront_stencil::sweeps::{execute, run_serial, KernelKind, SweepPlan, Variant, WavefrontConfig};
use wavefront_stencil::sync::BarrierKind;
use wavefront_stencil::Error;

fn check(plan: &SweepPlan, n: usize, seed: u64) {
    let mut plan = plan.clone();
    plan.verify = true;
    let out = execute(&plan, random_grid(n, seed)).unwrap();
    if let Some(Err(d)) = out.verification {
        panic!("{}: first difference {d:?}", describe(&plan));
    }
    let (_, nj, nk) = out.grid.extents();
    assert_eq!(out.stats.line_updates, (plan.iter_end * nj * nk) as u64, "{}", describe(&plan));
}

#[test]
fn serial_jacobi_matches_cellwise_reference() {
    for (a, b) in [(0.0, 1.0 / 6.0), (0.4, 0.1)] {
        let plan = SweepPlan::serial(KernelKind::Jacobi, 3).with_coeffs(StencilCoeffs::new(a, b).unwrap());
        let g = create_grid(9, 7, 5, InitPattern::random(3)).unwrap();
        let got = run_serial(&plan, g.clone()).unwrap();
        assert!(got.bit_eq(&reference_jacobi(g, a, b, 3)));
    }
}

#[test]
fn serial_gs_matches_cellwise_reference() {
    let g = create_grid(9, 7, 5, InitPattern::random(4)).unwrap();
    let got = run_serial(&SweepPlan::serial(KernelKind::GsNaive, 3), g.clone()).unwrap();
    assert!(got.bit_eq(&reference_gs(g.clone(), 1.0 / 6.0, 3)));

    let inter = run_serial(&SweepPlan::serial(KernelKind::GsInterleaved, 3), g.clone()).unwrap();
    let want = reference_gs(g, 1.0 / 6.0, 3);
    for (x, y) in inter.interior().zip(want.interior()) {
        assert!((x - y).abs() <= 1e-13 * y.abs(), "{x} vs {y}");
    }
}

#[test]
fn equivalence_matrix_on_thread_teams() {
    for plan in matrix_plans() {
        check(&plan, 34, 2024);
    }
}

#[test]
fn equivalence_matrix_under_access_checker() {
    for plan in matrix_plans() {
        check(&plan.instrumented(true), 34, 7);
    }
}

#[test]
fn tree_barrier_and_streaming_stores() {
    let cfg = WavefrontConfig::new(2, 2, 4).unwrap().with_barrier(BarrierKind::Tree);
    check(&SweepPlan::wavefront(KernelKind::Jacobi, 4, cfg), 20, 1);
    check(&SweepPlan::wavefront(KernelKind::GsInterleaved, 4, cfg), 20, 1);
    check(&SweepPlan::wavefront(KernelKind::Jacobi, 4, cfg).with_streaming_stores(true), 20, 1);
    check(&SweepPlan::threaded(KernelKind::Jacobi, 3, 3).with_streaming_stores(true), 20, 1);
}

#[test]
fn uneven_extents_and_odd_t() {
    for (n, t, b) in [(1, 3, 2), (2, 3, 5), (3, 1, 6), (1, 5, 3)] {
        for kernel in KernelKind::ALL {
            let cfg = WavefrontConfig::new(n, t, b).unwrap();
            let mut plan = SweepPlan::wavefront(kernel, 2 * t, cfg).with_coeffs(StencilCoeffs::new(0.3, 0.11).unwrap());
            plan.verify = true;
            let g = create_grid(7, 13, 5, InitPattern::random(9)).unwrap();
            let out = execute(&plan, g).unwrap();
            assert_eq!(out.verification, Some(Ok(())), "{}", describe(&plan));
        }
    }
}

#[test]
fn unsupported_pairs_are_rejected() {
    let g = random_grid(8, 1);
    for kernel in KernelKind::ALL {
        for variant in [Variant::Threaded, Variant::Pipeline] {
            if variant.supports(kernel) {
                continue;
            }
            let plan = SweepPlan::new(kernel, variant, 1);
            assert!(matches!(execute(&plan, g.clone()), Err(Error::Plan(_))));
        }
    }
    let gs_nt = SweepPlan::serial(KernelKind::GsNaive, 1).with_streaming_stores(true);
    assert!(matches!(execute(&gs_nt, g.clone()), Err(Error::Plan(_))));
}

#[test]
fn invalid_wavefront_shapes() {
    let g = random_grid(8, 1);
    let cfg = WavefrontConfig::new(1, 4, 2).unwrap();
    assert!(matches!(
        execute(&SweepPlan::wavefront(KernelKind::Jacobi, 6, cfg), g.clone()),
        Err(Error::Plan(_))
    ));
    let too_many = WavefrontConfig::new(1, 2, 9).unwrap();
    assert!(matches!(
        execute(&SweepPlan::wavefront(KernelKind::GsNaive, 2, too_many), g.clone()),
        Err(Error::Partition { .. })
    ));
    let thin = WavefrontConfig::new(1, 2, 5).unwrap();
    assert!(matches!(
        execute(&SweepPlan::wavefront(KernelKind::Jacobi, 2, thin), g),
        Err(Error::Partition { .. })
    ));
    assert!(WavefrontConfig::new(0, 1, 1).is_err());
}

#[test]
fn zero_iterations_leave_grid_untouched() {
    let g = random_grid(10, 5);
    for plan in matrix_plans() {
        let mut plan = plan;
        plan.iter_end = 0;
        let out = execute(&plan, g.clone()).unwrap();
        assert!(out.grid.bit_eq(&g), "{}", describe(&plan));
        assert_eq!(out.stats.line_updates, 0);
    }
}

#[test]
fn thin_grids_in_k() {
    for nk in [1, 2] {
        for (n, t, b) in [(1, 1, 1), (1, 3, 2), (2, 3, 3), (1, 2, 1)] {
            for kernel in KernelKind::ALL {
                let mut plan = SweepPlan::wavefront(kernel, 2 * t, WavefrontConfig::new(n, t, b).unwrap());
                plan.verify = true;
                let g = create_grid(5, 6, nk, InitPattern::random(nk as u64)).unwrap();
                assert_eq!(execute(&plan, g.clone()).unwrap().verification, Some(Ok(())), "{}", describe(&plan));
                assert!(execute(&plan.clone().instrumented(true), g).is_ok(), "{}", describe(&plan));
            }
        }
    }
}
