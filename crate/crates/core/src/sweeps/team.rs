//! Stage-scheduled execution shared by the parallel engines.
//!
//! An engine is a [`Program`]: a fixed number of stages, each split into
//! per-thread work. On a team every thread runs its part of a stage and then
//! waits at the barrier. In instrumented mode the same stages run on one
//! thread, in order, and every line access goes through a [`Tracker`] that
//! checks the value version read and flags any line touched by two threads of
//! one stage when at least one of them writes it.

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Mutex;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::sync::{Barrier, BarrierKind};
use crate::topo::pin_current_thread;

/// Unchecked view of an `f64` buffer shared by a team.
///
/// The schedule, not the type system, guarantees that no line is written by
/// one thread while another thread accesses it within a stage.
#[derive(Clone, Copy)]
pub(crate) struct RawBuf {
    ptr: *mut f64,
    len: usize,
}

// SAFETY: access is coordinated by the stage schedule and barriers; see type docs.
unsafe impl Send for RawBuf {}
unsafe impl Sync for RawBuf {}

impl RawBuf {
    pub(crate) fn new(data: &mut [f64]) -> Self {
        Self {
            ptr: data.as_mut_ptr(),
            len: data.len(),
        }
    }

    /// # Safety
    /// No thread may write `off..off + len` while the slice is alive.
    #[inline]
    pub(crate) unsafe fn slice<'a>(self, off: usize, len: usize) -> &'a [f64] {
        debug_assert!(off + len <= self.len);
        std::slice::from_raw_parts(self.ptr.add(off), len)
    }

    /// # Safety
    /// No other reference to `off..off + len` may be alive.
    #[inline]
    #[allow(clippy::mut_from_ref)]
    pub(crate) unsafe fn slice_mut<'a>(self, off: usize, len: usize) -> &'a mut [f64] {
        debug_assert!(off + len <= self.len);
        std::slice::from_raw_parts_mut(self.ptr.add(off), len)
    }
}

/// Buffer identity for access tracking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Buf {
    Grid(u8),
    Ring(usize),
    Boundary(usize),
}

/// What a line holds: the global sweep count and its logical coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Tag {
    pub level: u64,
    pub k: usize,
    pub j: usize,
}

pub(crate) trait Probe {
    fn read(&mut self, buf: Buf, line: usize, expect: Tag);
    fn write(&mut self, buf: Buf, line: usize, tag: Tag);
}

/// Probe used on teams; compiles to nothing.
pub(crate) struct NoProbe;

impl Probe for NoProbe {
    #[inline(always)]
    fn read(&mut self, _: Buf, _: usize, _: Tag) {}
    #[inline(always)]
    fn write(&mut self, _: Buf, _: usize, _: Tag) {}
}

#[derive(Default)]
struct Access {
    writer: Option<usize>,
    readers: Vec<usize>,
}

const MAX_REPORTED: usize = 8;

/// Access checker for instrumented runs.
///
/// Grid lines never written hold their initial value, version 0.
#[derive(Default)]
pub(crate) struct Tracker {
    tags: HashMap<(Buf, usize), Tag>,
    stage_log: HashMap<(Buf, usize), Access>,
    thread: usize,
    stage: usize,
    violations: Vec<String>,
    total_violations: usize,
}

impl Tracker {
    fn begin(&mut self, stage: usize, thread: usize) {
        if stage != self.stage {
            self.stage_log.clear();
        }
        self.stage = stage;
        self.thread = thread;
    }

    fn report(&mut self, msg: String) {
        self.total_violations += 1;
        if self.violations.len() < MAX_REPORTED {
            self.violations.push(format!("stage {} thread {}: {msg}", self.stage, self.thread));
        }
    }

    fn finish(self) -> Result<()> {
        if self.total_violations == 0 {
            return Ok(());
        }
        Err(Error::Schedule(format!(
            "{} violations; first: {}",
            self.total_violations,
            self.violations.join("; ")
        )))
    }
}

impl Probe for Tracker {
    fn read(&mut self, buf: Buf, line: usize, expect: Tag) {
        let held = match (self.tags.get(&(buf, line)), buf) {
            (Some(t), _) => Some(*t),
            (None, Buf::Grid(_)) => Some(Tag { level: 0, ..expect }),
            (None, _) => None,
        };
        if held != Some(expect) {
            self.report(format!("read {buf:?} line {line}: expected {expect:?}, holds {held:?}"));
        }
        let me = self.thread;
        let access = self.stage_log.entry((buf, line)).or_default();
        if let Some(w) = access.writer.filter(|&w| w != me) {
            self.report(format!("read {buf:?} line {line} written by thread {w} in the same stage"));
        }
        let access = self.stage_log.get_mut(&(buf, line)).unwrap();
        if !access.readers.contains(&me) {
            access.readers.push(me);
        }
    }

    fn write(&mut self, buf: Buf, line: usize, tag: Tag) {
        let me = self.thread;
        let access = self.stage_log.entry((buf, line)).or_default();
        let clash = access
            .writer
            .filter(|&w| w != me)
            .or_else(|| access.readers.iter().copied().find(|&r| r != me));
        access.writer = Some(me);
        if let Some(other) = clash {
            self.report(format!("write {buf:?} line {line} also accessed by thread {other} in the same stage"));
        }
        self.tags.insert((buf, line), tag);
    }
}

/// A stage-scheduled parallel computation.
pub(crate) trait Program: Sync {
    fn threads(&self) -> usize;
    fn stages(&self) -> usize;
    /// Runs `thread`'s share of `stage`; returns the number of line updates done.
    fn run_stage<P: Probe>(&self, thread: usize, stage: usize, probe: &mut P) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TeamReport {
    pub line_updates: u64,
    pub pinned: bool,
}

/// Runs `prog` on a team of `prog.threads()` threads with a barrier after
/// every stage. Pinning failures are logged and leave the run unpinned.
pub(crate) fn run_team<E: Program>(
    prog: &E,
    kind: BarrierKind,
    placement: Option<&[usize]>,
) -> Result<TeamReport> {
    let threads = prog.threads();
    let stages = prog.stages();
    if threads == 1 && placement.is_none() {
        let mut updates = 0;
        for s in 0..stages {
            updates += prog.run_stage(0, s, &mut NoProbe);
        }
        return Ok(TeamReport {
            line_updates: updates,
            pinned: false,
        });
    }
    let barrier = Barrier::new(threads, kind)?;
    let updates = AtomicU64::new(0);
    let pinned = AtomicBool::new(placement.is_some());
    let failure = Mutex::new(None);
    std::thread::scope(|scope| {
        for rank in 0..threads {
            let (barrier, updates, pinned, failure) = (&barrier, &updates, &pinned, &failure);
            let hw = placement.map(|p| p[rank]);
            scope.spawn(move || {
                if let Some(hw) = hw {
                    if let Err(e) = pin_current_thread(hw) {
                        log::warn!("{e}; rank {rank} runs unpinned");
                        pinned.store(false, Ordering::Relaxed);
                    }
                }
                let mut mine = 0;
                let mut failed = false;
                for s in 0..stages {
                    // A panicking rank keeps arriving at the barrier so the rest of
                    // the team can finish; the panic is re-raised after the join.
                    if !failed {
                        match panic::catch_unwind(AssertUnwindSafe(|| prog.run_stage(rank, s, &mut NoProbe))) {
                            Ok(n) => mine += n,
                            Err(payload) => {
                                failed = true;
                                failure.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(payload);
                            }
                        }
                    }
                    barrier.wait(rank);
                }
                updates.fetch_add(mine, Ordering::Relaxed);
            });
        }
    });
    if let Some(payload) = failure.into_inner().unwrap_or_else(|e| e.into_inner()) {
        panic::resume_unwind(payload);
    }
    Ok(TeamReport {
        line_updates: updates.into_inner(),
        pinned: pinned.into_inner(),
    })
}

/// Runs `prog` sequentially under the access checker.
pub(crate) fn run_instrumented<E: Program>(prog: &E) -> Result<u64> {
    let mut tracker = Tracker {
        stage: usize::MAX,
        ..Tracker::default()
    };
    let mut updates = 0;
    for s in 0..prog.stages() {
        for thread in 0..prog.threads() {
            tracker.begin(s, thread);
            updates += prog.run_stage(thread, s, &mut tracker);
        }
    }
    tracker.finish().map(|()| updates)
}
