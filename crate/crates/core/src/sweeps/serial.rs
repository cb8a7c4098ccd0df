use crate::grid::Grid3D;
use crate::kernels::{jacobi_line, jacobi_line_streaming, split_neighbors, GsKernel, StencilCoeffs};

/// `iters` Jacobi sweeps with ping-pong buffers; the result is in the returned grid.
pub(crate) fn jacobi(mut g: Grid3D, coeffs: StencilCoeffs, iters: usize, streaming: bool) -> Grid3D {
    if iters == 0 {
        return g;
    }
    let mut other = g.clone();
    let (len, sj, sk) = (g.line_stride(), g.line_stride(), g.plane_stride());
    for _ in 0..iters {
        let src = g.as_slice();
        let dst = other.as_mut_slice();
        for k in 0..g.nk() as isize {
            for j in 0..g.nj() as isize {
                let off = g.line_offset(k, j);
                let line = |o: usize| &src[o..o + len];
                let out = &mut dst[off..off + len];
                let (c, jm, jp, km, kp) = (line(off), line(off - sj), line(off + sj), line(off - sk), line(off + sk));
                if streaming {
                    jacobi_line_streaming(out, c, jm, jp, km, kp, coeffs);
                } else {
                    jacobi_line(out, c, jm, jp, km, kp, coeffs);
                }
            }
        }
        std::mem::swap(&mut g, &mut other);
    }
    g
}

/// `iters` in-place lexicographic Gauss-Seidel sweeps.
pub(crate) fn gauss_seidel(mut g: Grid3D, kernel: GsKernel, b: f64, iters: usize) -> Grid3D {
    let (len, sj, sk) = (g.line_stride(), g.line_stride(), g.plane_stride());
    for _ in 0..iters {
        for k in 0..g.nk() as isize {
            for j in 0..g.nj() as isize {
                let off = g.line_offset(k, j);
                let (c, jm, jp, km, kp) = split_neighbors(g.as_mut_slice(), off, len, sj, sk);
                kernel.apply(c, jm, jp, km, kp, b);
            }
        }
    }
    g
}
