//! Spin barriers for fixed thread teams.
//!
//! Wavefront sweeps synchronize after every plane update, so phases last a few
//! microseconds and OS-blocking barriers are far too slow. Two forms exist:
//!
//! * [`BarrierKind::CentralSpin`]: one arrival counter plus a global epoch.
//!   Lowest latency when every thread owns a physical core.
//! * [`BarrierKind::Tree`]: binary tournament tree, arrival signalled from the
//!   leaves to rank 0, release propagated back down. Each thread spins on its
//!   own cache line, which behaves much better when SMT siblings share a core.
//!
//! Waiters spin with a pause hint and exponential backoff, then fall back to
//! yielding the time slice so oversubscribed teams keep making progress.
//! Every wait is a full acquire/release ordering point for all participants.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use crossbeam_utils::{Backoff, CachePadded};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BarrierKind {
    CentralSpin,
    Tree,
}

impl BarrierKind {
    /// Central spin while every thread has its own core, tree otherwise.
    pub fn auto(threads: usize, physical_cores: usize) -> Self {
        if threads <= physical_cores.max(1) {
            BarrierKind::CentralSpin
        } else {
            BarrierKind::Tree
        }
    }
}

impl std::fmt::Display for BarrierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BarrierKind::CentralSpin => "central-spin",
            BarrierKind::Tree => "tree",
        })
    }
}

/// Reusable barrier for a team of `team_size` ranked threads.
pub struct Barrier {
    team: usize,
    kind: BarrierKind,
    inner: Inner,
    // Per-rank count of completed phases. Used by the tree form and for the
    // duplicate-rank check in debug builds.
    phase: Box<[CachePadded<AtomicU64>]>,
}

enum Inner {
    Central {
        arrived: CachePadded<AtomicUsize>,
        epoch: CachePadded<AtomicU64>,
    },
    Tree {
        arrive: Box<[CachePadded<AtomicU64>]>,
        release: Box<[CachePadded<AtomicU64>]>,
    },
}

fn spin_until(mut done: impl FnMut() -> bool) {
    let backoff = Backoff::new();
    while !done() {
        backoff.snooze();
    }
}

/// Free-function spelling of [`Barrier::new`].
pub fn barrier_create(team_size: usize, kind: BarrierKind) -> Result<Barrier> {
    Barrier::new(team_size, kind)
}

impl Barrier {
    pub fn new(team_size: usize, kind: BarrierKind) -> Result<Self> {
        if team_size == 0 {
            return Err(Error::Config("barrier team size must be at least 1".into()));
        }
        let counters = |n: usize| -> Box<[CachePadded<AtomicU64>]> {
            (0..n).map(|_| CachePadded::new(AtomicU64::new(0))).collect()
        };
        let inner = match kind {
            BarrierKind::CentralSpin => Inner::Central {
                arrived: CachePadded::new(AtomicUsize::new(0)),
                epoch: CachePadded::new(AtomicU64::new(0)),
            },
            BarrierKind::Tree => Inner::Tree {
                arrive: counters(team_size),
                release: counters(team_size),
            },
        };
        Ok(Self {
            team: team_size,
            kind,
            inner,
            phase: counters(team_size),
        })
    }

    pub fn team_size(&self) -> usize {
        self.team
    }

    pub fn kind(&self) -> BarrierKind {
        self.kind
    }

    /// Depth of the arrival tree, `ceil(log2(team))`. Zero for the central form.
    pub fn levels(&self) -> u32 {
        match self.inner {
            Inner::Central { .. } => 0,
            Inner::Tree { .. } => self.team.next_power_of_two().trailing_zeros(),
        }
    }

    /// Children of `rank` in the tournament tree: `rank + 2^l` for every
    /// `l` below the lowest set bit of `rank` (all levels for rank 0).
    fn children(&self, rank: usize) -> impl DoubleEndedIterator<Item = usize> {
        let limit = if rank == 0 {
            usize::BITS
        } else {
            rank.trailing_zeros()
        };
        let mut count = 0;
        while count < limit && rank + (1usize << count) < self.team {
            count += 1;
        }
        (0..count).map(move |l| rank + (1usize << l))
    }

    /// Blocks until all `team_size` ranks have arrived at the current phase and
    /// returns that phase's index (0, 1, 2, ...). Each rank must call exactly
    /// once per phase.
    pub fn wait(&self, rank: usize) -> u64 {
        assert!(rank < self.team, "rank {rank} outside team of {}", self.team);
        let my_phase = self.phase[rank].load(Ordering::Relaxed);
        let done = match &self.inner {
            Inner::Central { arrived, epoch } => {
                let e = epoch.load(Ordering::Acquire);
                debug_assert_eq!(e, my_phase, "rank {rank} entered phase {e} twice");
                if arrived.fetch_add(1, Ordering::AcqRel) + 1 == self.team {
                    arrived.store(0, Ordering::Relaxed);
                    epoch.store(e + 1, Ordering::Release);
                } else {
                    spin_until(|| epoch.load(Ordering::Acquire) != e);
                }
                e
            }
            Inner::Tree { arrive, release } => {
                let target = my_phase + 1;
                for child in self.children(rank) {
                    spin_until(|| arrive[child].load(Ordering::Acquire) >= target);
                }
                if rank != 0 {
                    arrive[rank].store(target, Ordering::Release);
                    spin_until(|| release[rank].load(Ordering::Acquire) >= target);
                }
                for child in self.children(rank).rev() {
                    release[child].store(target, Ordering::Release);
                }
                my_phase
            }
        };
        self.phase[rank].store(my_phase + 1, Ordering::Relaxed);
        done
    }
}

impl std::fmt::Debug for Barrier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Barrier")
            .field("team", &self.team)
            .field("kind", &self.kind)
            .finish()
    }
}

/// Free-function spelling of [`Barrier::wait`].
pub fn barrier_wait(barrier: &Barrier, my_rank: usize) -> u64 {
    barrier.wait(my_rank)
}

/// Average wall time per phase for a team of `team` threads over `phases` phases.
pub fn barrier_latency(kind: BarrierKind, team: usize, phases: u64) -> Result<std::time::Duration> {
    let barrier = Barrier::new(team, kind)?;
    let start = std::time::Instant::now();
    std::thread::scope(|s| {
        for rank in 1..team {
            let barrier = &barrier;
            s.spawn(move || {
                for _ in 0..phases {
                    barrier.wait(rank);
                }
            });
        }
        for _ in 0..phases {
            barrier.wait(0);
        }
    });
    Ok(start.elapsed() / phases.max(1) as u32)
}
