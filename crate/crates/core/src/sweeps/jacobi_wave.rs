//! Wavefront temporal blocking for Jacobi.
//!
//! A round fuses `t` sweeps. Level `l` denotes the values after `l` sweeps of
//! the round; level 0 is the grid at round start. Rank `r` of a group computes
//! level `r + 1` from level `r`, one k-plane per stage, trailing rank `r - 1`
//! by two planes. Even levels overwrite the grid in place (the level two below
//! is dead by then), odd levels live in a per-group ring of four planes per
//! level. With odd `t` the last level goes to two extra ring planes and is
//! copied into the grid two planes later, so the ring holds `2t` planes.
//!
//! Blocks along j are skewed parallelograms: level `l` of block `b` covers
//! lines `[first(b, l), end(b, l))` with `first = j0 - l`, so every level of
//! a block only needs lower levels of the same block plus the two lines just
//! below `first`. Those come from the previous block, which copies its last
//! two lines of every level it consumes into a boundary buffer. Blocks start
//! `D >= 2` stages apart; group `g` takes blocks `b % N == g`, and `N * D` is at
//! least one block pass so a group is free before its next block starts.

use std::ops::Range;

use super::team::{Buf, Probe, Program, RawBuf, Tag};
use crate::aligned::AlignedVec;
use crate::error::Result;
use crate::grid::Grid3D;
use crate::kernels::{jacobi_line, jacobi_line_streaming, StencilCoeffs};

pub(crate) struct Layout {
    pub groups: usize,
    pub t: usize,
    pub blocks: Vec<Range<usize>>,
    pub rounds: usize,
    pub coeffs: StencilCoeffs,
    pub streaming: bool,
    /// Stage offset between consecutive blocks; `None` picks the safe minimum.
    pub stagger: Option<usize>,
}

pub(crate) struct JacobiWavefront {
    grid: RawBuf,
    ni: usize,
    nj: usize,
    nk: usize,
    len: usize,
    plane: usize,
    groups: usize,
    t: usize,
    blocks: Vec<Range<usize>>,
    rounds: usize,
    coeffs: StencilCoeffs,
    streaming: bool,
    rings: Vec<RawBuf>,
    ring_rows: usize,
    bounds: Vec<RawBuf>,
    halo: Vec<[f64; 2]>,
    pass: usize,
    stagger: usize,
}

#[derive(Clone, Copy)]
struct Loc {
    buf: Buf,
    mem: RawBuf,
    off: usize,
    tracked: bool,
}

/// Ring planes needed for blocking factor `t`.
pub(crate) fn ring_planes(t: usize) -> usize {
    2 * t
}

/// Builds the engine on `g` and its scratch storage, then hands it to `run`.
pub(crate) fn with_engine<R>(
    g: &mut Grid3D,
    layout: Layout,
    run: impl FnOnce(&JacobiWavefront) -> Result<R>,
) -> Result<R> {
    let (ni, nj, nk) = g.extents();
    let len = g.line_stride();
    let t = layout.t;
    let nb = layout.blocks.len();
    let halo: Vec<[f64; 2]> = (0..nk as isize)
        .flat_map(|k| (0..nj as isize).map(move |j| (k, j)))
        .map(|(k, j)| [g.get(k, j, -1), g.get(k, j, ni as isize)])
        .collect();
    let pass = nk + 2 * (t - 1) + if t % 2 == 1 { 2 } else { 0 };
    let mut eng = JacobiWavefront {
        grid: RawBuf::new(g.as_mut_slice()),
        ni,
        nj,
        nk,
        len,
        plane: g.plane_stride(),
        groups: layout.groups,
        t,
        blocks: layout.blocks,
        rounds: layout.rounds,
        coeffs: layout.coeffs,
        streaming: layout.streaming,
        rings: Vec::new(),
        ring_rows: 0,
        bounds: Vec::new(),
        halo,
        pass,
        stagger: layout.stagger.unwrap_or(pass.div_ceil(layout.groups).max(2)),
    };
    eng.ring_rows = (0..nb)
        .flat_map(|b| (1..=t).map(move |l| (b, l)))
        .map(|(b, l)| eng.end(b, l) - eng.first(b, l))
        .max()
        .unwrap_or(0);
    let mut rings = (0..eng.groups)
        .map(|_| AlignedVec::zeroed(ring_planes(t) * eng.ring_rows * len, 1))
        .collect::<Result<Vec<_>>>()?;
    let bound_count = if nb > 1 { eng.groups + 1 } else { 0 };
    let mut bounds = (0..bound_count)
        .map(|_| AlignedVec::zeroed(t * nk * 2 * len, 1))
        .collect::<Result<Vec<_>>>()?;
    eng.rings = rings.iter_mut().map(|r| RawBuf::new(r.as_mut_slice())).collect();
    eng.bounds = bounds.iter_mut().map(|b| RawBuf::new(b.as_mut_slice())).collect();
    run(&eng)
}

impl JacobiWavefront {
    fn first(&self, b: usize, level: usize) -> usize {
        self.blocks[b].start.saturating_sub(level)
    }

    fn end(&self, b: usize, level: usize) -> usize {
        if b + 1 == self.blocks.len() {
            self.nj
        } else {
            self.blocks[b].end.saturating_sub(level)
        }
    }

    pub fn stages_per_round(&self) -> usize {
        (self.blocks.len() - 1) * self.stagger + self.pass
    }

    fn ring_slot(&self, level: usize, k: usize) -> usize {
        if level == self.t && self.t % 2 == 1 {
            2 * (self.t - 1) + k % 2
        } else {
            debug_assert!(level % 2 == 1);
            2 * (level - 1) + k % 4
        }
    }

    fn grid_loc(&self, k: isize, j: isize, tracked: bool) -> Loc {
        Loc {
            buf: Buf::Grid(0),
            mem: self.grid,
            off: (k + 1) as usize * self.plane + (j + 1) as usize * self.len,
            tracked,
        }
    }

    /// Where block `b` of group `g` keeps its own level `level` line `(k, j)`.
    fn own(&self, g: usize, b: usize, level: usize, k: usize, j: usize) -> Loc {
        if level.is_multiple_of(2) {
            return self.grid_loc(k as isize, j as isize, true);
        }
        let row = j - self.first(b, level);
        debug_assert!(row < self.ring_rows);
        Loc {
            buf: Buf::Ring(g),
            mem: self.rings[g],
            off: (self.ring_slot(level, k) * self.ring_rows + row) * self.len,
            tracked: true,
        }
    }

    fn boundary(&self, interface: usize, level: usize, k: usize, row: usize) -> Loc {
        let idx = interface % (self.groups + 1);
        Loc {
            buf: Buf::Boundary(idx),
            mem: self.bounds[idx],
            off: ((level * self.nk + k) * 2 + row) * self.len,
            tracked: true,
        }
    }

    /// Where block `b` reads level `level` at `(k, j)`, halo included.
    fn input(&self, g: usize, b: usize, level: usize, k: isize, j: isize) -> Loc {
        if k < 0 || j < 0 || k >= self.nk as isize || j >= self.nj as isize {
            return self.grid_loc(k, j, false);
        }
        let (k, j) = (k as usize, j as usize);
        let first = self.first(b, level);
        if j < first {
            let row = j + 2 - first;
            debug_assert!(row < 2, "block {b} level {level} line {j} below boundary");
            return self.boundary(b, level, k, row);
        }
        self.own(g, b, level, k, j)
    }

    fn read<P: Probe>(&self, probe: &mut P, loc: Loc, level: u64, k: isize, j: isize) -> &[f64] {
        if loc.tracked {
            probe.read(loc.buf, loc.off / self.len, Tag { level, k: k as usize, j: j as usize });
        }
        // SAFETY: the schedule guarantees no writer of this line in the current stage.
        unsafe { loc.mem.slice(loc.off, self.len) }
    }

    fn copy_line<P: Probe>(&self, probe: &mut P, from: Loc, to: Loc, tag: Tag, interior_only: bool) {
        probe.read(from.buf, from.off / self.len, tag);
        probe.write(to.buf, to.off / self.len, tag);
        let range = if interior_only { 1..self.len - 1 } else { 0..self.len };
        // SAFETY: distinct buffers or distinct lines; exclusive write access per schedule.
        unsafe {
            let src = from.mem.slice(from.off, self.len);
            let dst = to.mem.slice_mut(to.off, self.len);
            dst[range.clone()].copy_from_slice(&src[range]);
        }
    }

    fn copy_back<P: Probe>(&self, probe: &mut P, g: usize, b: usize, k: usize, base: u64) {
        let t = self.t;
        for j in self.first(b, t)..self.end(b, t) {
            let tag = Tag { level: base + t as u64, k, j };
            let from = self.own(g, b, t, k, j);
            self.copy_line(probe, from, self.grid_loc(k as isize, j as isize, true), tag, true);
        }
    }

    fn block_stage<P: Probe>(&self, probe: &mut P, g: usize, r: usize, b: usize, ls: usize, round: usize) -> u64 {
        let t = self.t;
        let base = (round * t) as u64;
        let copies_back = t % 2 == 1 && r == t - 1;
        let Some(k) = ls.checked_sub(2 * r) else {
            return 0;
        };
        if k >= self.nk {
            if copies_back && k < self.nk + 2 && k >= 2 {
                self.copy_back(probe, g, b, k - 2, base);
            }
            return 0;
        }
        if b + 1 < self.blocks.len() {
            let end = self.end(b, r);
            for j in end.saturating_sub(2)..end {
                debug_assert!(j >= self.first(b, r));
                let tag = Tag { level: base + r as u64, k, j };
                let to = self.boundary(b + 1, r, k, j + 2 - end);
                self.copy_line(probe, self.own(g, b, r, k, j), to, tag, false);
            }
        }
        if copies_back && k >= 2 {
            self.copy_back(probe, g, b, k - 2, base);
        }
        let (lin, lout) = (r, r + 1);
        let stream = self.streaming && lout == t && t.is_multiple_of(2);
        let (first, end) = (self.first(b, lout), self.end(b, lout));
        let ki = k as isize;
        for j in first..end {
            let ji = j as isize;
            let level = base + lin as u64;
            let mut input = |kk: isize, jj: isize| self.read(probe, self.input(g, b, lin, kk, jj), level, kk, jj);
            let c = input(ki, ji);
            let jm = input(ki, ji - 1);
            let jp = input(ki, ji + 1);
            let km = input(ki - 1, ji);
            let kp = input(ki + 1, ji);
            let out = self.own(g, b, lout, k, j);
            probe.write(out.buf, out.off / self.len, Tag { level: base + lout as u64, k, j });
            // SAFETY: the output line is owned by this task for the stage and never aliases
            // an input (inputs hold level `lin`, the output level `lout`).
            let dst = unsafe { out.mem.slice_mut(out.off, self.len) };
            if stream {
                jacobi_line_streaming(dst, c, jm, jp, km, kp, self.coeffs);
            } else {
                jacobi_line(dst, c, jm, jp, km, kp, self.coeffs);
            }
            if !matches!(out.buf, Buf::Grid(_)) {
                let [west, east] = self.halo[k * self.nj + j];
                dst[0] = west;
                dst[self.ni + 1] = east;
            }
        }
        (end - first) as u64
    }
}

impl Program for JacobiWavefront {
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
        let mut updates = 0;
        for b in (g..self.blocks.len()).step_by(self.groups) {
            let Some(ls) = s.checked_sub(b * self.stagger).filter(|&ls| ls < self.pass) else {
                continue;
            };
            updates += self.block_stage(probe, g, r, b, ls, round);
        }
        updates
    }
}
