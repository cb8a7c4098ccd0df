//! Sweep engines: serial, k-slab threaded Jacobi, pipelined Gauss-Seidel and
//! the wavefront temporal-blocking engines for both kernels.
//!
//! Every engine applies the same line kernels in an order that produces the
//! serial result bit for bit. The parallel engines are stage schedules run by a
//! fixed thread team with one barrier per stage; setting
//! [`SweepPlan::instrumented`] runs the same schedule on one thread under an
//! access checker that rejects stale reads and intra-stage conflicts.

mod config;
mod gs_wave;
mod jacobi_wave;
mod serial;
mod team;
mod threaded;

use serde::Serialize;

pub use config::{
    block_fits, choose_block_size, partition_blocks, working_set_bytes, KernelKind, SweepPlan, Variant,
    WavefrontConfig, CACHE_BUDGET_FRACTION,
};

use crate::error::{Error, Result};
use crate::grid::{CellDiff, Grid3D};
use crate::sync::BarrierKind;
use team::{run_instrumented, run_team, Program, RawBuf, TeamReport};

/// Counters gathered while a plan runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SweepStats {
    /// Line updates executed; always `iter_end * nk * nj`.
    pub line_updates: u64,
    /// Barrier-separated stages of the schedule (0 for serial runs).
    pub stages: u64,
    pub threads: usize,
    pub barrier: Option<BarrierKind>,
    pub pinned: bool,
    pub instrumented: bool,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub grid: Grid3D,
    pub stats: SweepStats,
    /// With [`SweepPlan::verify`]: `Ok` when bitwise equal to the serial oracle,
    /// else the first differing cell.
    pub verification: Option<std::result::Result<(), CellDiff>>,
}

/// Validates and runs `plan` on `g`.
pub fn execute(plan: &SweepPlan, g: Grid3D) -> Result<SweepOutcome> {
    plan.validate(&g)?;
    let expected = if plan.verify {
        Some(serial_result(plan, g.clone()))
    } else {
        None
    };
    let (grid, stats) = dispatch(plan, g)?;
    let verification = expected.map(|want| match grid.first_difference(&want) {
        None => Ok(()),
        Some(d) => Err(d),
    });
    Ok(SweepOutcome {
        grid,
        stats,
        verification,
    })
}

fn serial_result(plan: &SweepPlan, g: Grid3D) -> Grid3D {
    match plan.kernel.gs_kernel() {
        None => serial::jacobi(g, plan.coeffs, plan.iter_end, plan.streaming_stores),
        Some(kernel) => serial::gauss_seidel(g, kernel, plan.coeffs.b, plan.iter_end),
    }
}

fn dispatch(plan: &SweepPlan, mut g: Grid3D) -> Result<(Grid3D, SweepStats)> {
    let barrier = plan.config.barrier.unwrap_or(BarrierKind::CentralSpin);
    let (_, nj, nk) = g.extents();
    let mut stats = SweepStats {
        line_updates: 0,
        stages: 0,
        threads: plan.team_size(),
        barrier: (plan.team_size() > 1 && !plan.instrumented).then_some(barrier),
        pinned: false,
        instrumented: plan.instrumented,
    };
    let mut launch = |prog: &dyn Launch| -> Result<()> {
        stats.stages = prog.stage_count() as u64;
        let rep = prog.launch(plan, barrier)?;
        stats.line_updates = rep.line_updates;
        stats.pinned = rep.pinned;
        Ok(())
    };
    let grid = match plan.variant {
        Variant::Serial => {
            stats.line_updates = (plan.iter_end * nk * nj) as u64;
            serial_result(plan, g)
        }
        Variant::Threaded => {
            if plan.iter_end == 0 {
                g
            } else {
                let mut other = g.clone();
                let prog = threaded::ThreadedJacobi {
                    a: RawBuf::new(g.as_mut_slice()),
                    b: RawBuf::new(other.as_mut_slice()),
                    nj,
                    len: g.line_stride(),
                    plane: g.plane_stride(),
                    slabs: partition_blocks(nk, plan.threads)?,
                    iters: plan.iter_end,
                    coeffs: plan.coeffs,
                    streaming: plan.streaming_stores,
                };
                launch(&prog)?;
                if plan.iter_end % 2 == 1 {
                    other
                } else {
                    g
                }
            }
        }
        Variant::Pipeline | Variant::Wavefront if plan.kernel.is_gauss_seidel() => {
            let (groups, t, blocks) = if plan.variant == Variant::Pipeline {
                (plan.threads, 1, plan.threads)
            } else {
                let c = &plan.config;
                (c.groups, c.threads_per_group, c.blocks)
            };
            if plan.iter_end > 0 {
                let prog = gs_wave::GsWavefront {
                    grid: RawBuf::new(g.as_mut_slice()),
                    nk,
                    nj,
                    len: g.line_stride(),
                    plane: g.plane_stride(),
                    groups,
                    t,
                    blocks: partition_blocks(nj, blocks)?,
                    rounds: plan.iter_end.div_ceil(t),
                    kernel: plan.kernel.gs_kernel().expect("Gauss-Seidel kernel"),
                    b: plan.coeffs.b,
                    skew: 2,
                };
                launch(&prog)?;
            }
            g
        }
        Variant::Pipeline => unreachable!("validated: pipeline needs a Gauss-Seidel kernel"),
        Variant::Wavefront => {
            let c = &plan.config;
            let layout = jacobi_wave::Layout {
                groups: c.groups,
                t: c.threads_per_group,
                blocks: partition_blocks(nj, c.blocks)?,
                rounds: plan.iter_end / c.threads_per_group,
                coeffs: plan.coeffs,
                streaming: plan.streaming_stores,
                stagger: None,
            };
            jacobi_wave::with_engine(&mut g, layout, |prog| launch(prog))?;
            g
        }
    };
    Ok((grid, stats))
}

/// Object-safe front for the generic stage programs.
trait Launch {
    fn stage_count(&self) -> usize;
    fn launch(&self, plan: &SweepPlan, barrier: BarrierKind) -> Result<TeamReport>;
}

impl<E: Program> Launch for E {
    fn stage_count(&self) -> usize {
        self.stages()
    }

    fn launch(&self, plan: &SweepPlan, barrier: BarrierKind) -> Result<TeamReport> {
        if plan.instrumented {
            return run_instrumented(self).map(|line_updates| TeamReport {
                line_updates,
                pinned: false,
            });
        }
        run_team(self, barrier, plan.placement.as_deref())
    }
}

fn expect_variant(plan: &SweepPlan, variant: Variant) -> Result<()> {
    if plan.variant != variant {
        return Err(Error::Plan(format!("expected a {variant} plan, got {}", plan.variant)));
    }
    Ok(())
}

/// Serial sweeps: ping-pong Jacobi or in-place lexicographic Gauss-Seidel.
pub fn run_serial(plan: &SweepPlan, g: Grid3D) -> Result<Grid3D> {
    expect_variant(plan, Variant::Serial)?;
    execute(plan, g).map(|o| o.grid)
}

/// Jacobi with one k-slab per thread and one barrier per sweep.
pub fn run_threaded_jacobi(plan: &SweepPlan, g: Grid3D) -> Result<Grid3D> {
    expect_variant(plan, Variant::Threaded)?;
    execute(plan, g).map(|o| o.grid)
}

/// Gauss-Seidel with one j-block per thread, pipelined along k.
pub fn run_pipeline_gs(plan: &SweepPlan, g: Grid3D) -> Result<Grid3D> {
    expect_variant(plan, Variant::Pipeline)?;
    execute(plan, g).map(|o| o.grid)
}

/// Jacobi with `t` fused sweeps per pass and no second grid.
pub fn run_wavefront_jacobi(plan: &SweepPlan, g: Grid3D) -> Result<Grid3D> {
    expect_variant(plan, Variant::Wavefront)?;
    if plan.kernel.is_gauss_seidel() {
        return Err(Error::Plan("wavefront Jacobi needs the jacobi kernel".into()));
    }
    execute(plan, g).map(|o| o.grid)
}

/// In-place Gauss-Seidel with `t` sweeps in flight per thread group.
pub fn run_wavefront_gs(plan: &SweepPlan, g: Grid3D) -> Result<Grid3D> {
    expect_variant(plan, Variant::Wavefront)?;
    if !plan.kernel.is_gauss_seidel() {
        return Err(Error::Plan("wavefront Gauss-Seidel needs a Gauss-Seidel kernel".into()));
    }
    execute(plan, g).map(|o| o.grid)
}

/// Barrier-separated stages the schedule of `plan` takes on a grid with `nk` planes.
pub fn stage_count(plan: &SweepPlan, nk: usize) -> usize {
    let t = plan.config.threads_per_group;
    match plan.variant {
        Variant::Serial => 0,
        Variant::Threaded => plan.iter_end,
        Variant::Pipeline => plan.iter_end * (nk + plan.threads - 1),
        Variant::Wavefront if plan.kernel.is_gauss_seidel() => {
            plan.iter_end / t * (nk + 2 * (t - 1) + plan.config.blocks - 1)
        }
        Variant::Wavefront => {
            let pass = nk + 2 * (t - 1) + if t % 2 == 1 { 2 } else { 0 };
            let stagger = pass.div_ceil(plan.config.groups).max(2);
            plan.iter_end / t * ((plan.config.blocks - 1) * stagger + pass)
        }
    }
}

/// Ring planes the Jacobi wavefront allocates per thread group.
pub fn temp_ring_planes(config: &WavefrontConfig) -> usize {
    jacobi_wave::ring_planes(config.threads_per_group)
}
