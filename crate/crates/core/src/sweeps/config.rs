use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid3D;
use crate::kernels::{GsKernel, StencilCoeffs};
use crate::sync::BarrierKind;
use crate::topo::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    Jacobi,
    GsNaive,
    GsInterleaved,
}

impl KernelKind {
    pub fn is_gauss_seidel(self) -> bool {
        !matches!(self, KernelKind::Jacobi)
    }

    pub fn gs_kernel(self) -> Option<GsKernel> {
        match self {
            KernelKind::Jacobi => None,
            KernelKind::GsNaive => Some(GsKernel::Naive),
            KernelKind::GsInterleaved => Some(GsKernel::Interleaved),
        }
    }

    pub const ALL: [KernelKind; 3] = [KernelKind::Jacobi, KernelKind::GsNaive, KernelKind::GsInterleaved];
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelKind::Jacobi => "jacobi",
            KernelKind::GsNaive => "gs-naive",
            KernelKind::GsInterleaved => "gs-interleaved",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Serial,
    /// k-slab parallel Jacobi, one barrier per sweep.
    Threaded,
    /// j-block pipelined Gauss-Seidel.
    Pipeline,
    /// Temporal blocking with `t` wavefronts per thread group.
    Wavefront,
}

impl Variant {
    /// Whether `kernel` can run under this variant.
    pub fn supports(self, kernel: KernelKind) -> bool {
        match self {
            Variant::Serial | Variant::Wavefront => true,
            Variant::Threaded => !kernel.is_gauss_seidel(),
            Variant::Pipeline => kernel.is_gauss_seidel(),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Serial => "serial",
            Variant::Threaded => "threaded",
            Variant::Pipeline => "pipeline",
            Variant::Wavefront => "wavefront",
        })
    }
}

/// Thread-group layout of the wavefront engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WavefrontConfig {
    /// Number of thread groups `N`.
    pub groups: usize,
    /// Threads per group `t`, which is also the temporal blocking factor.
    pub threads_per_group: usize,
    /// Spatial blocks `B` along j.
    pub blocks: usize,
    /// `None` picks a barrier from the topology at run time.
    pub barrier: Option<BarrierKind>,
}

impl Default for WavefrontConfig {
    fn default() -> Self {
        Self {
            groups: 1,
            threads_per_group: 1,
            blocks: 1,
            barrier: None,
        }
    }
}

impl WavefrontConfig {
    pub fn new(groups: usize, threads_per_group: usize, blocks: usize) -> Result<Self> {
        let cfg = Self {
            groups,
            threads_per_group,
            blocks,
            barrier: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_barrier(mut self, kind: BarrierKind) -> Self {
        self.barrier = Some(kind);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups == 0 || self.threads_per_group == 0 {
            return Err(Error::Config(format!(
                "need at least one group and one thread per group, got N={} t={}",
                self.groups, self.threads_per_group
            )));
        }
        if self.blocks < self.groups {
            return Err(Error::Config(format!(
                "blocks B={} must be at least the group count N={}",
                self.blocks, self.groups
            )));
        }
        Ok(())
    }

    /// Ring capacity of the Jacobi wavefront, in planes.
    pub fn temp_planes(&self) -> usize {
        2 * self.threads_per_group
    }

    pub fn total_threads(&self) -> usize {
        self.groups * self.threads_per_group
    }
}

/// Everything needed to run one sweep sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub kernel: KernelKind,
    pub variant: Variant,
    pub iter_end: usize,
    pub coeffs: StencilCoeffs,
    /// Team size `P` of the threaded and pipeline variants.
    pub threads: usize,
    pub config: WavefrontConfig,
    /// Non-temporal stores for Jacobi writes that go to the result grid.
    pub streaming_stores: bool,
    /// Run the schedule sequentially under the access checker instead of on a team.
    pub instrumented: bool,
    /// Compare against the serial oracle after the run.
    pub verify: bool,
    /// Hardware thread per team rank; `None` leaves threads unpinned.
    pub placement: Option<Vec<usize>>,
}

impl SweepPlan {
    pub fn new(kernel: KernelKind, variant: Variant, iter_end: usize) -> Self {
        Self {
            kernel,
            variant,
            iter_end,
            coeffs: StencilCoeffs::laplace(),
            threads: 1,
            config: WavefrontConfig::default(),
            streaming_stores: false,
            instrumented: false,
            verify: false,
            placement: None,
        }
    }

    pub fn serial(kernel: KernelKind, iter_end: usize) -> Self {
        Self::new(kernel, Variant::Serial, iter_end)
    }

    pub fn threaded(kernel: KernelKind, iter_end: usize, threads: usize) -> Self {
        Self {
            threads,
            ..Self::new(kernel, Variant::Threaded, iter_end)
        }
    }

    pub fn pipeline(kernel: KernelKind, iter_end: usize, threads: usize) -> Self {
        Self {
            threads,
            ..Self::new(kernel, Variant::Pipeline, iter_end)
        }
    }

    pub fn wavefront(kernel: KernelKind, iter_end: usize, config: WavefrontConfig) -> Self {
        Self {
            config,
            ..Self::new(kernel, Variant::Wavefront, iter_end)
        }
    }

    pub fn with_coeffs(mut self, coeffs: StencilCoeffs) -> Self {
        self.coeffs = coeffs;
        self
    }

    pub fn with_streaming_stores(mut self, on: bool) -> Self {
        self.streaming_stores = on;
        self
    }

    pub fn instrumented(mut self, on: bool) -> Self {
        self.instrumented = on;
        self
    }

    pub fn with_placement(mut self, placement: Option<Vec<usize>>) -> Self {
        self.placement = placement;
        self
    }

    /// Threads the plan's engine runs with.
    pub fn team_size(&self) -> usize {
        match self.variant {
            Variant::Serial => 1,
            Variant::Threaded | Variant::Pipeline => self.threads,
            Variant::Wavefront => self.config.total_threads(),
        }
    }

    /// The serial plan every variant must reproduce bitwise.
    pub fn oracle(&self) -> SweepPlan {
        SweepPlan {
            variant: Variant::Serial,
            threads: 1,
            config: WavefrontConfig::default(),
            instrumented: false,
            verify: false,
            placement: None,
            ..self.clone()
        }
    }

    /// Checks the plan against the variant's preconditions for grid `g`.
    pub fn validate(&self, g: &Grid3D) -> Result<()> {
        if !self.variant.supports(self.kernel) {
            return Err(Error::Plan(format!(
                "kernel {} cannot run under variant {}",
                self.kernel, self.variant
            )));
        }
        if self.streaming_stores && self.kernel.is_gauss_seidel() {
            return Err(Error::Plan("streaming stores do not apply to in-place Gauss-Seidel".into()));
        }
        if let Some(p) = &self.placement {
            if p.len() != self.team_size() {
                return Err(Error::Plan(format!(
                    "placement lists {} hardware threads for a team of {}",
                    p.len(),
                    self.team_size()
                )));
            }
        }
        match self.variant {
            Variant::Serial => Ok(()),
            Variant::Threaded => {
                if self.threads == 0 {
                    return Err(Error::Config("thread count must be at least 1".into()));
                }
                partition_blocks(g.nk(), self.threads).map(|_| ())
            }
            Variant::Pipeline => {
                if self.threads == 0 {
                    return Err(Error::Config("thread count must be at least 1".into()));
                }
                partition_blocks(g.nj(), self.threads).map(|_| ())
            }
            Variant::Wavefront => {
                self.config.validate()?;
                let t = self.config.threads_per_group;
                if !self.iter_end.is_multiple_of(t) {
                    return Err(Error::Plan(format!(
                        "iteration count {} is not a multiple of t={t}",
                        self.iter_end
                    )));
                }
                let blocks = partition_blocks(g.nj(), self.config.blocks)?;
                if !self.kernel.is_gauss_seidel() && blocks.len() > 1 && blocks.iter().any(|b| b.len() < 2) {
                    return Err(Error::Partition {
                        extent: g.nj(),
                        parts: self.config.blocks,
                    });
                }
                Ok(())
            }
        }
    }
}

/// Splits `0..extent` into `parts` contiguous ranges whose sizes differ by at
/// most one, larger ranges first.
pub fn partition_blocks(extent: usize, parts: usize) -> Result<Vec<Range<usize>>> {
    if parts == 0 || parts > extent {
        return Err(Error::Partition { extent, parts });
    }
    let (base, extra) = (extent / parts, extent % parts);
    let mut start = 0;
    Ok((0..parts)
        .map(|p| {
            let len = base + usize::from(p < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect())
}

/// Estimated bytes one thread group keeps live for a block of `block_nj` lines:
/// `t + 2` source planes plus `2t` temporary planes.
pub fn working_set_bytes(t: usize, ni: usize, block_nj: usize) -> u64 {
    ((t + 2 + 2 * t) * (ni + 2) * (block_nj + 2) * std::mem::size_of::<f64>()) as u64
}

/// Share of the outermost cache one group may fill.
pub const CACHE_BUDGET_FRACTION: f64 = 0.5;

/// Whether blocks of `block_nj` lines fit the per-group cache budget when
/// `groups` groups share a cache of `cache_bytes`.
pub fn block_fits(cache_bytes: u64, groups: usize, t: usize, ni: usize, block_nj: usize) -> bool {
    let budget = cache_bytes as f64 * CACHE_BUDGET_FRACTION / groups.max(1) as f64;
    working_set_bytes(t, ni, block_nj) as f64 <= budget
}

/// Smallest block count whose blocks fit the cache budget, clamped to
/// `[groups, max(groups, nj / 2)]` so blocks keep at least two lines.
/// Without a known cache size this returns `groups` and logs a warning.
pub fn choose_block_size(topo: &Topology, groups: usize, t: usize, ni: usize, nj: usize) -> usize {
    let groups = groups.max(1);
    let upper = groups.max(nj / 2).max(1);
    let Some(cache) = topo.outer_cache_bytes() else {
        log::warn!("outermost cache size unknown; using one block per group");
        return groups;
    };
    for b in groups..=upper {
        if block_fits(cache, groups, t, ni, nj.div_ceil(b)) {
            return b;
        }
    }
    log::warn!(
        "no block count up to {upper} fits {} bytes of cache for t={t}, ni={ni}",
        cache
    );
    upper
}
