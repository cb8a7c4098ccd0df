//! Timing, STREAM triad bandwidth and the bandwidth-bound performance model.

use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::aligned::AlignedVec;
use crate::error::{Error, Result};
use crate::grid::Grid3D;
use crate::sweeps::{execute, partition_blocks, KernelKind, SweepPlan, Variant};
use crate::sync::{Barrier, BarrierKind};
use crate::topo::{pin_current_thread, Topology};

/// Bandwidth-bound ceiling `P0 = M_S / bytes_per_lup`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfModel {
    /// Sustained memory bandwidth in bytes per second.
    pub ms: f64,
    pub bytes_per_lup: f64,
    /// Lattice site updates per second.
    pub p0: f64,
}

impl PerfModel {
    pub fn new(ms: f64, bytes_per_lup: f64) -> Result<Self> {
        Ok(Self {
            ms,
            bytes_per_lup,
            p0: predict_p0(ms, bytes_per_lup)?,
        })
    }

    pub fn mlups(&self) -> f64 {
        self.p0 / 1e6
    }
}

pub fn predict_p0(ms: f64, bytes_per_lup: f64) -> Result<f64> {
    if !(ms > 0.0 && bytes_per_lup > 0.0 && ms.is_finite() && bytes_per_lup.is_finite()) {
        return Err(Error::Domain(format!(
            "bandwidth and bytes per update must be positive, got {ms} and {bytes_per_lup}"
        )));
    }
    Ok(ms / bytes_per_lup)
}

/// Main-memory bytes per lattice site update.
///
/// A plain sweep loads and stores every cell once (16 B); a Jacobi store into
/// the second grid also pays the write-allocate read unless streaming stores
/// are used (24 B). In-place Gauss-Seidel stores into the line it just loaded,
/// so it costs 16 B and streaming stores do not apply. A wavefront pass of
/// depth `t` moves the grid through memory once for `t` sweeps.
pub fn predict_traffic(kernel: KernelKind, variant: Variant, t: usize, nt_stores: bool) -> Result<f64> {
    if t == 0 {
        return Err(Error::Domain("blocking factor t must be at least 1".into()));
    }
    if !variant.supports(kernel) {
        return Err(Error::Domain(format!("no traffic model for {kernel} under {variant}")));
    }
    let plain = match (kernel, nt_stores) {
        (KernelKind::Jacobi, true) => 16.0,
        (KernelKind::Jacobi, false) => 24.0,
        (_, false) => 16.0,
        (_, true) => {
            return Err(Error::Domain("streaming stores do not apply to in-place Gauss-Seidel".into()))
        }
    };
    Ok(match variant {
        Variant::Wavefront => plain / t as f64,
        _ => plain,
    })
}

/// Middle value; mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Millions of lattice site updates per second.
pub fn mlups(iter_end: usize, cells: usize, seconds: f64) -> f64 {
    iter_end as f64 * cells as f64 / seconds / 1e6
}

/// Identifies the machine and time a result was taken on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostFingerprint {
    pub topology: String,
    pub os: String,
    pub arch: String,
    pub unix_time: u64,
}

impl HostFingerprint {
    pub fn capture(topo: &Topology) -> Self {
        Self {
            topology: topo.summary(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            unix_time: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }
}

impl std::fmt::Display for HostFingerprint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{} @{}: {}", self.os, self.arch, self.unix_time, self.topology)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub kernel: KernelKind,
    pub variant: Variant,
    pub extents: (usize, usize, usize),
    pub iter_end: usize,
    pub threads: usize,
    pub warmup: usize,
    /// Wall seconds of every timed repetition, in run order.
    pub seconds: Vec<f64>,
    pub median_seconds: f64,
    pub mlups: f64,
    pub pinned: bool,
    pub host: HostFingerprint,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Measurement {
    pub fn repetitions(&self) -> usize {
        self.seconds.len()
    }

    /// MLUP/s of one repetition.
    pub fn rep_mlups(&self, rep: usize) -> f64 {
        let (ni, nj, nk) = self.extents;
        mlups(self.iter_end, ni * nj * nk, self.seconds[rep])
    }
}

/// Smallest observable step of the monotonic clock.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..32 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

/// Times `reps` calls of `run` after `warmup` untimed calls. `setup` prepares
/// each call's input outside the timed region.
pub fn time_reps<T>(
    reps: usize,
    warmup: usize,
    mut setup: impl FnMut() -> Result<T>,
    mut run: impl FnMut(T) -> Result<()>,
) -> Result<Vec<f64>> {
    if reps == 0 {
        return Err(Error::Config("at least one repetition is required".into()));
    }
    for _ in 0..warmup {
        run(setup()?)?;
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let input = setup()?;
        let start = Instant::now();
        run(input)?;
        times.push(start.elapsed().as_secs_f64());
    }
    Ok(times)
}

/// Runs `plan` on fresh copies of `input` and summarizes the timings.
pub fn measure(plan: &SweepPlan, input: &Grid3D, reps: usize, warmup: usize, topo: &Topology) -> Result<Measurement> {
    plan.validate(input)?;
    let mut pinned = plan.placement.is_some();
    let times = time_reps(
        reps,
        warmup,
        || Ok(input.clone()),
        |g| {
            let out = execute(plan, g)?;
            pinned &= out.stats.pinned;
            Ok(())
        },
    )?;
    let med = median(&times).expect("reps >= 1");
    let mut warnings = topo.warnings.clone();
    let res = timer_resolution().as_secs_f64();
    if res > 0.01 * med {
        warnings.push(format!(
            "timer resolution {res:.2e} s exceeds 1% of a repetition ({med:.2e} s); increase the iteration count"
        ));
    }
    if plan.placement.is_some() && !pinned {
        warnings.push("pinning failed; results are unpinned".into());
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let (ni, nj, nk) = input.extents();
    Ok(Measurement {
        kernel: plan.kernel,
        variant: plan.variant,
        extents: (ni, nj, nk),
        iter_end: plan.iter_end,
        threads: plan.team_size(),
        warmup,
        mlups: mlups(plan.iter_end, ni * nj * nk, med),
        median_seconds: med,
        seconds: times,
        pinned,
        host: HostFingerprint::capture(topo),
        warnings,
    })
}

/// Bytes the triad counts per element.
pub fn triad_bytes_per_element(nt_stores: bool) -> u64 {
    if nt_stores {
        24
    } else {
        32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub threads: usize,
    pub elements: usize,
    pub nt_stores: bool,
    pub reps: usize,
    pub placement: Option<Vec<usize>>,
}

impl StreamConfig {
    pub fn new(threads: usize, elements: usize, nt_stores: bool) -> Self {
        Self {
            threads,
            elements,
            nt_stores,
            reps: 5,
            placement: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamResult {
    pub threads: usize,
    pub elements: usize,
    /// Streaming stores requested.
    pub nt_requested: bool,
    /// Streaming stores actually issued.
    pub nt_used: bool,
    pub bytes_per_element: u64,
    pub seconds: Vec<f64>,
    /// Bytes per second from the median repetition.
    pub bandwidth: f64,
    pub validated: bool,
    pub pinned: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

const TRIAD_SCALAR: f64 = 3.0;

fn triad_plain(a: &mut [f64], b: &[f64], c: &[f64], s: f64) {
    for ((a, b), c) in a.iter_mut().zip(b).zip(c) {
        *a = b + s * c;
    }
}

/// Returns whether streaming stores were used.
fn triad_chunk(a: &mut [f64], b: &[f64], c: &[f64], s: f64, nt: bool) -> bool {
    #[cfg(target_arch = "x86_64")]
    if nt {
        use std::arch::x86_64::{_mm_loadu_pd, _mm_sfence, _mm_stream_pd};
        let n = a.len();
        let mut i = 0;
        while i < n && !(a[i..].as_ptr() as usize).is_multiple_of(16) {
            a[i] = b[i] + s * c[i];
            i += 1;
        }
        while i + 1 < n {
            let pair = [b[i] + s * c[i], b[i + 1] + s * c[i + 1]];
            // SAFETY: a[i..i + 2] is in bounds and 16-byte aligned.
            unsafe { _mm_stream_pd(a[i..].as_mut_ptr(), _mm_loadu_pd(pair.as_ptr())) };
            i += 2;
        }
        if i < n {
            a[i] = b[i] + s * c[i];
        }
        // SAFETY: plain fence instruction.
        unsafe { _mm_sfence() };
        return true;
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = nt;
    triad_plain(a, b, c, s);
    false
}

/// Outermost-cache fit check for the triad arrays. Returns a warning when the
/// three arrays together are smaller than four times the cache.
pub fn stream_size_warning(topo: &Topology, elements: usize) -> Option<String> {
    let cache = topo.outer_cache_bytes()?;
    let footprint = 3 * 8 * elements as u64;
    (footprint < 4 * cache).then(|| {
        format!("triad arrays ({footprint} bytes) are smaller than 4x the outermost cache ({cache} bytes)")
    })
}

/// Elements that make the three triad arrays four times the outermost cache,
/// or `fallback` when the cache size is unknown.
pub fn stream_elements_for(topo: &Topology, fallback: usize) -> usize {
    topo.outer_cache_bytes()
        .map_or(fallback, |c| (4 * c).div_ceil(24) as usize)
}

/// `a[i] = b[i] + s * c[i]` over `elements` values split across `threads`.
pub fn stream_triad(threads: usize, elements: usize, nt_stores: bool) -> Result<StreamResult> {
    stream_triad_with(&StreamConfig::new(threads, elements, nt_stores))
}

pub fn stream_triad_with(cfg: &StreamConfig) -> Result<StreamResult> {
    if cfg.elements == 0 {
        return Err(Error::Config("triad needs at least one element".into()));
    }
    if cfg.threads == 0 || cfg.reps == 0 {
        return Err(Error::Config("triad needs at least one thread and one repetition".into()));
    }
    if let Some(p) = &cfg.placement {
        if p.len() != cfg.threads {
            return Err(Error::Config(format!("placement lists {} threads for {}", p.len(), cfg.threads)));
        }
    }
    let chunks = partition_blocks(cfg.elements, cfg.threads)
        .map_err(|_| Error::Config(format!("{} elements cannot feed {} threads", cfg.elements, cfg.threads)))?;
    let mut a = AlignedVec::zeroed(cfg.elements, 0)?;
    let mut b = AlignedVec::zeroed(cfg.elements, 0)?;
    let mut c = AlignedVec::zeroed(cfg.elements, 0)?;
    let barrier = Barrier::new(cfg.threads, BarrierKind::CentralSpin)?;
    let mut seconds = vec![0.0; cfg.reps];
    let mut nt_used = cfg.nt_stores;
    let mut pinned = cfg.placement.is_some();
    std::thread::scope(|scope| {
        let mut a_rest = a.as_mut_slice();
        let mut b_rest = b.as_mut_slice();
        let mut c_rest = c.as_mut_slice();
        let mut handles = Vec::new();
        for (rank, range) in chunks.iter().enumerate() {
            let (a_mine, a_next) = std::mem::take(&mut a_rest).split_at_mut(range.len());
            let (b_mine, b_next) = std::mem::take(&mut b_rest).split_at_mut(range.len());
            let (c_mine, c_next) = std::mem::take(&mut c_rest).split_at_mut(range.len());
            (a_rest, b_rest, c_rest) = (a_next, b_next, c_next);
            let barrier = &barrier;
            let hw = cfg.placement.as_ref().map(|p| p[rank]);
            let (reps, nt) = (cfg.reps, cfg.nt_stores);
            handles.push(scope.spawn(move || {
                let mut ok_pin = true;
                if let Some(hw) = hw {
                    if let Err(e) = pin_current_thread(hw) {
                        log::warn!("{e}; triad rank {rank} runs unpinned");
                        ok_pin = false;
                    }
                }
                // First touch by the owning thread.
                b_mine.fill(1.0);
                c_mine.fill(2.0);
                a_mine.fill(0.0);
                let mut times = Vec::with_capacity(reps);
                let mut used = true;
                for _ in 0..reps {
                    barrier.wait(rank);
                    let start = Instant::now();
                    used &= triad_chunk(a_mine, b_mine, c_mine, TRIAD_SCALAR, nt);
                    barrier.wait(rank);
                    times.push(start.elapsed().as_secs_f64());
                }
                (times, used, ok_pin)
            }));
        }
        for (rank, h) in handles.into_iter().enumerate() {
            let (times, used, ok_pin) = h.join().expect("triad worker panicked");
            if rank == 0 {
                seconds = times;
            }
            nt_used &= used;
            pinned &= ok_pin;
        }
    });
    let expect = 1.0 + TRIAD_SCALAR * 2.0;
    let validated = a.as_slice().iter().all(|&x| x == expect);
    if !validated {
        return Err(Error::Domain("triad result validation failed; measurement void".into()));
    }
    let mut warnings = Vec::new();
    if cfg.nt_stores && !nt_used {
        warnings.push("streaming stores unsupported on this platform; plain stores used".into());
    }
    let bytes_per_element = triad_bytes_per_element(nt_used);
    let med = median(&seconds).expect("reps >= 1");
    Ok(StreamResult {
        threads: cfg.threads,
        elements: cfg.elements,
        nt_requested: cfg.nt_stores,
        nt_used,
        bytes_per_element,
        bandwidth: (bytes_per_element * cfg.elements as u64) as f64 / med,
        seconds,
        validated,
        pinned,
        warnings,
    })
}
