use proptest::prelude::*;
use wavefront_stencil::grid::{create_grid, InitPattern};
use wavefront_stencil::kernels::{gs_line_update, gs_line_update_interleaved, StencilCoeffs};
use wavefront_stencil::perf::predict_traffic;
use wavefront_stencil::sweeps::{execute, partition_blocks, KernelKind, SweepPlan, Variant, WavefrontConfig};

#[derive(Debug, Clone)]
struct WaveCase {
    kernel: KernelKind,
    groups: usize,
    t: usize,
    blocks: usize,
    ni: usize,
    nj: usize,
    nk: usize,
    rounds: usize,
    seed: u64,
}

fn wave_case() -> impl Strategy<Value = WaveCase> {
    let kernel = prop::sample::select(KernelKind::ALL.to_vec());
    (kernel, 1usize..=3, 1usize..=4, 1usize..=9, 2usize..=12, 1usize..=8, 1usize..=2, any::<u64>())
        .prop_flat_map(|(kernel, groups, t, ni, nj, nk, rounds, seed)| {
            // Jacobi blocks need two lines once there is more than one.
            let max_b = if kernel == KernelKind::Jacobi { (nj / 2).max(1) } else { nj };
            let groups = groups.min(max_b);
            (groups..=max_b).prop_map(move |blocks| WaveCase {
                kernel,
                groups,
                t,
                blocks,
                ni,
                nj,
                nk,
                rounds,
                seed,
            })
        })
}

fn plan_for(c: &WaveCase) -> SweepPlan {
    let cfg = WavefrontConfig::new(c.groups, c.t, c.blocks).unwrap();
    SweepPlan::wavefront(c.kernel, c.rounds * c.t, cfg).with_coeffs(StencilCoeffs::new(0.25, 0.125).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wavefront_equals_serial(c in wave_case()) {
        let mut plan = plan_for(&c);
        plan.verify = true;
        let g = create_grid(c.ni, c.nj, c.nk, InitPattern::random(c.seed)).unwrap();
        let out = execute(&plan, g).unwrap();
        prop_assert_eq!(out.verification, Some(Ok(())));
    }

    #[test]
    fn schedules_pass_access_checker(c in wave_case()) {
        let plan = plan_for(&c).instrumented(true);
        let g = create_grid(c.ni, c.nj, c.nk, InitPattern::random(c.seed)).unwrap();
        prop_assert!(execute(&plan, g).is_ok());
    }

    #[test]
    fn work_is_conserved(c in wave_case()) {
        let plan = plan_for(&c);
        let g = create_grid(c.ni, c.nj, c.nk, InitPattern::random(c.seed)).unwrap();
        let out = execute(&plan, g).unwrap();
        prop_assert_eq!(out.stats.line_updates, (plan.iter_end * c.nj * c.nk) as u64);
    }

    #[test]
    fn repeated_runs_are_identical(c in wave_case()) {
        let plan = plan_for(&c);
        let g = create_grid(c.ni, c.nj, c.nk, InitPattern::random(c.seed)).unwrap();
        let first = execute(&plan, g.clone()).unwrap().grid;
        let second = execute(&plan, g).unwrap().grid;
        prop_assert!(first.bit_eq(&second));
    }

    #[test]
    fn pipeline_equals_serial(
        kernel in prop::sample::select(vec![KernelKind::GsNaive, KernelKind::GsInterleaved]),
        p in 1usize..=5, iters in 0usize..=3, seed in any::<u64>(),
    ) {
        let mut plan = SweepPlan::pipeline(kernel, iters, p);
        plan.verify = true;
        let g = create_grid(6, 7, 5, InitPattern::random(seed)).unwrap();
        prop_assert_eq!(execute(&plan, g).unwrap().verification, Some(Ok(())));
    }

    #[test]
    fn threaded_jacobi_equals_serial(p in 1usize..=5, iters in 0usize..=3, seed in any::<u64>()) {
        let mut plan = SweepPlan::threaded(KernelKind::Jacobi, iters, p);
        plan.verify = true;
        let g = create_grid(6, 5, 7, InitPattern::random(seed)).unwrap();
        prop_assert_eq!(execute(&plan, g).unwrap().verification, Some(Ok(())));
    }

    #[test]
    fn partitions_cover_disjointly(extent in 1usize..500, parts in 1usize..64) {
        prop_assume!(parts <= extent);
        let r = partition_blocks(extent, parts).unwrap();
        prop_assert_eq!(r.len(), parts);
        prop_assert_eq!(r[0].start, 0);
        prop_assert_eq!(r[parts - 1].end, extent);
        for w in r.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        let sizes: Vec<usize> = r.iter().map(|b| b.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn fixed_points_survive_every_kernel(c in -(1i64 << 40)..(1i64 << 40), kernel in prop::sample::select(KernelKind::ALL.to_vec())) {
        // Integer-valued fields: six equal terms sum exactly, so the mean is exact.
        for pattern in [InitPattern::Uniform(c as f64), InitPattern::Linear] {
            let g = create_grid(5, 6, 4, pattern).unwrap();
            let out = execute(&SweepPlan::serial(kernel, 2), g.clone()).unwrap().grid;
            prop_assert!(out.bit_eq(&g));
        }
    }

    #[test]
    fn interleaving_is_exact_on_small_integers(seed in any::<u64>(), k in 0usize..6, j in 0usize..6) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut g = create_grid(9, 6, 6, InitPattern::Uniform(0.0)).unwrap();
        for kk in -1..=6isize {
            for jj in -1..=6isize {
                for ii in -1..=9isize {
                    g.set(kk, jj, ii, rng.gen_range(-64..64) as f64).unwrap();
                }
            }
        }
        let mut a = g.clone();
        let mut b = g;
        // b = 1 keeps every partial sum an exact small integer.
        gs_line_update(&mut a, 1.0, k, j).unwrap();
        gs_line_update_interleaved(&mut b, 1.0, k, j).unwrap();
        prop_assert!(a.bit_eq(&b));
    }

    #[test]
    fn wavefront_traffic_divides_plain(t in 1usize..=16, nt in any::<bool>()) {
        for kernel in KernelKind::ALL {
            if kernel.is_gauss_seidel() && nt {
                prop_assert!(predict_traffic(kernel, Variant::Wavefront, t, nt).is_err());
                continue;
            }
            let plain = predict_traffic(kernel, Variant::Serial, 1, nt).unwrap();
            let wave = predict_traffic(kernel, Variant::Wavefront, t, nt).unwrap();
            prop_assert_eq!(plain, wave * t as f64);
        }
    }
}
