#![allow(dead_code)]

use wavefront_stencil::grid::{create_grid, Grid3D, InitPattern};
use wavefront_stencil::sweeps::{KernelKind, SweepPlan, Variant, WavefrontConfig};

/// Cell-by-cell Jacobi written against the public accessors only.
pub fn reference_jacobi(mut g: Grid3D, a: f64, b: f64, iters: usize) -> Grid3D {
    let (ni, nj, nk) = g.extents();
    let (ni, nj, nk) = (ni as isize, nj as isize, nk as isize);
    for _ in 0..iters {
        let src = g.clone();
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    let s = |k, j, i| src.get(k, j, i);
                    let nb = s(k, j, i - 1) + s(k, j, i + 1) + s(k, j - 1, i) + s(k, j + 1, i) + s(k - 1, j, i)
                        + s(k + 1, j, i);
                    g.set(k, j, i, a * s(k, j, i) + b * nb).unwrap();
                }
            }
        }
    }
    g
}

/// Lexicographic Gauss-Seidel, one cell at a time, in place.
pub fn reference_gs(mut g: Grid3D, b: f64, iters: usize) -> Grid3D {
    let (ni, nj, nk) = g.extents();
    let (ni, nj, nk) = (ni as isize, nj as isize, nk as isize);
    for _ in 0..iters {
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    let nb = g.get(k, j, i - 1) + g.get(k, j, i + 1) + g.get(k, j - 1, i) + g.get(k, j + 1, i)
                        + g.get(k - 1, j, i)
                        + g.get(k + 1, j, i);
                    g.set(k, j, i, b * nb).unwrap();
                }
            }
        }
    }
    g
}

pub fn random_grid(n: usize, seed: u64) -> Grid3D {
    create_grid(n, n, n, InitPattern::random(seed)).unwrap()
}

/// (N, t, B) wavefront shapes of the equivalence matrix.
pub const WAVE_CONFIGS: [(usize, usize, usize); 4] = [(1, 1, 1), (1, 2, 2), (1, 4, 4), (2, 2, 4)];
pub const TEAM_SIZES: [usize; 3] = [1, 2, 4];

/// Every supported (plan, label) point of the equivalence matrix.
pub fn matrix_plans() -> Vec<SweepPlan> {
    let mut plans = Vec::new();
    for kernel in KernelKind::ALL {
        for variant in [Variant::Threaded, Variant::Pipeline, Variant::Wavefront] {
            if !variant.supports(kernel) {
                continue;
            }
            if variant == Variant::Wavefront {
                for (n, t, b) in WAVE_CONFIGS {
                    for iters in [t, 2 * t] {
                        let cfg = WavefrontConfig::new(n, t, b).unwrap();
                        plans.push(SweepPlan::wavefront(kernel, iters, cfg));
                    }
                }
            } else {
                for p in TEAM_SIZES {
                    for iters in [1, 4] {
                        plans.push(match variant {
                            Variant::Threaded => SweepPlan::threaded(kernel, iters, p),
                            _ => SweepPlan::pipeline(kernel, iters, p),
                        });
                    }
                }
            }
        }
    }
    plans
}

pub fn describe(p: &SweepPlan) -> String {
    match p.variant {
        Variant::Wavefront => format!(
            "{} {} N={} t={} B={} iters={}",
            p.kernel, p.variant, p.config.groups, p.config.threads_per_group, p.config.blocks, p.iter_end
        ),
        _ => format!("{} {} P={} iters={}", p.kernel, p.variant, p.threads, p.iter_end),
    }
}
