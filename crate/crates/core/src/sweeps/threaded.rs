use std::ops::Range;

use super::team::{Buf, Probe, Program, RawBuf, Tag};
use crate::kernels::{jacobi_line, jacobi_line_streaming, StencilCoeffs};

/// Jacobi with the k-range split into one slab per thread; one stage per sweep.
/// Even sweeps read `a` and write `b`, odd sweeps the reverse.
pub(crate) struct ThreadedJacobi {
    pub a: RawBuf,
    pub b: RawBuf,
    pub nj: usize,
    pub len: usize,
    pub plane: usize,
    pub slabs: Vec<Range<usize>>,
    pub iters: usize,
    pub coeffs: StencilCoeffs,
    pub streaming: bool,
}

impl Program for ThreadedJacobi {
    fn threads(&self) -> usize {
        self.slabs.len()
    }

    fn stages(&self) -> usize {
        self.iters
    }

    fn run_stage<P: Probe>(&self, thread: usize, stage: usize, probe: &mut P) -> u64 {
        let ((src, sid), (dst, did)) = if stage.is_multiple_of(2) {
            ((self.a, 0), (self.b, 1))
        } else {
            ((self.b, 1), (self.a, 0))
        };
        let (len, sj, sk) = (self.len, self.len, self.plane);
        let level = stage as u64;
        let slab = self.slabs[thread].clone();
        let nk = self.slabs.last().map_or(0, |r| r.end);
        for k in slab.clone() {
            for j in 0..self.nj {
                let off = (k + 1) * sk + (j + 1) * sj;
                let mut see = |o: usize, kk: usize, jj: usize, inside: bool| {
                    if inside {
                        probe.read(Buf::Grid(sid), o / len, Tag { level, k: kk, j: jj });
                    }
                };
                see(off, k, j, true);
                see(off - sj, k, j.wrapping_sub(1), j > 0);
                see(off + sj, k, j + 1, j + 1 < self.nj);
                see(off - sk, k.wrapping_sub(1), j, k > 0);
                see(off + sk, k + 1, j, k + 1 < nk);
                probe.write(Buf::Grid(did), off / len, Tag { level: level + 1, k, j });
                // SAFETY: `dst` lines of this slab are written by this thread only; `src` is
                // read-only during the stage.
                unsafe {
                    let line = |o: usize| src.slice(o, len);
                    let out = dst.slice_mut(off, len);
                    let args = (line(off), line(off - sj), line(off + sj), line(off - sk), line(off + sk));
                    if self.streaming {
                        jacobi_line_streaming(out, args.0, args.1, args.2, args.3, args.4, self.coeffs);
                    } else {
                        jacobi_line(out, args.0, args.1, args.2, args.3, args.4, self.coeffs);
                    }
                }
            }
        }
        (slab.len() * self.nj) as u64
    }
}
