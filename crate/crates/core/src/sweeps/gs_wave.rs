//! Pipelined and wavefront Gauss-Seidel.
//!
//! Within a round of `t` sweeps, the update of plane `k` of j-block `b` for
//! the round's sweep `r` runs at stage `k + 2r + b`. Thread `(g, r)` owns
//! sweep `r` of every block `b` with `b % N == g`. Two tasks of one stage on
//! the same block and neighboring planes, or on neighboring blocks of one
//! plane, would need sweep numbers differing by half a step, so no stage ever
//! writes a line another task of that stage touches. Every dependency of a
//! task (`j-1`, `k-1` new values; `j+1`, `k+1` old values) sits exactly one
//! stage earlier or later, which keeps the lexicographic update order.
//!
//! With `t = 1` and one block per thread this is the classic pipeline.

use std::ops::Range;

use super::team::{Buf, Probe, Program, RawBuf, Tag};
use crate::kernels::GsKernel;

pub(crate) struct GsWavefront {
    pub grid: RawBuf,
    pub nk: usize,
    pub nj: usize,
    pub len: usize,
    pub plane: usize,
    pub groups: usize,
    pub t: usize,
    pub blocks: Vec<Range<usize>>,
    pub rounds: usize,
    pub kernel: GsKernel,
    pub b: f64,
    /// Plane distance between consecutive sweeps; 2 is the only safe value.
    pub skew: usize,
}

impl GsWavefront {
    pub fn stages_per_round(&self) -> usize {
        self.nk + self.skew * (self.t - 1) + (self.blocks.len() - 1)
    }
}

impl Program for GsWavefront {
    fn threads(&self) -> usize {
        self.groups * self.t
    }

    fn stages(&self) -> usize {
        self.rounds * self.stages_per_round()
    }

    fn run_stage<P: Probe>(&self, thread: usize, stage: usize, probe: &mut P) -> u64 {
        let (g, r) = (thread / self.t, thread % self.t);
        let spr = self.stages_per_round();
        let (round, s) = (stage / spr, stage % spr);
        let old = (round * self.t + r) as u64;
        let (len, sj, sk) = (self.len, self.len, self.plane);
        let mut updates = 0;
        for (b, block) in self.blocks.iter().enumerate().skip(g).step_by(self.groups) {
            let Some(k) = s.checked_sub(self.skew * r + b).filter(|&k| k < self.nk) else {
                continue;
            };
            for j in block.clone() {
                let off = (k + 1) * sk + (j + 1) * sj;
                let line = |o: usize| o / len;
                probe.read(Buf::Grid(0), line(off), Tag { level: old, k, j });
                if j > 0 {
                    probe.read(Buf::Grid(0), line(off - sj), Tag { level: old + 1, k, j: j - 1 });
                }
                if j + 1 < self.nj {
                    probe.read(Buf::Grid(0), line(off + sj), Tag { level: old, k, j: j + 1 });
                }
                if k > 0 {
                    probe.read(Buf::Grid(0), line(off - sk), Tag { level: old + 1, k: k - 1, j });
                }
                if k + 1 < self.nk {
                    probe.read(Buf::Grid(0), line(off + sk), Tag { level: old, k: k + 1, j });
                }
                probe.write(Buf::Grid(0), line(off), Tag { level: old + 1, k, j });
                // SAFETY: the stage schedule gives this task exclusive use of line
                // (k, j) and read-only use of its four neighbors (see module docs).
                unsafe {
                    let c = self.grid.slice_mut(off, len);
                    let nb = |o: usize| self.grid.slice(o, len);
                    self.kernel
                        .apply(c, nb(off - sj), nb(off + sj), nb(off - sk), nb(off + sk), self.b);
                }
            }
            updates += block.len() as u64;
        }
        updates
    }
}
