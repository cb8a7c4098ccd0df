//! Line update kernels for the 7-point stencil.
//!
//! The slice kernels work on padded lines of `ni + 2` values (halo at both
//! ends) and only touch positions `1..=ni` of the line they write. All sweep
//! engines call these routines; they differ only in which lines they pass.
//!
//! Neighbor terms are summed left to right in the fixed order
//! `(i-1) + (i+1) + (j-1) + (j+1) + (k-1) + (k+1)`, which makes every
//! variant that reorders only the outer loops bitwise reproducible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid3D;

/// Center weight `a` (Jacobi only) and neighbor weight `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StencilCoeffs {
    pub a: f64,
    pub b: f64,
}

impl StencilCoeffs {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Config(format!("coefficients must be finite, got a={a} b={b}")));
        }
        Ok(Self { a, b })
    }

    /// `a = 0, b = 1/6`: the mean of the six neighbors.
    pub fn laplace() -> Self {
        Self {
            a: 0.0,
            b: 1.0 / 6.0,
        }
    }
}

impl Default for StencilCoeffs {
    fn default() -> Self {
        Self::laplace()
    }
}

/// Floating-point operations per cell update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KernelCost {
    pub adds: u32,
    pub mults: u32,
}

pub const JACOBI_COST: KernelCost = KernelCost { adds: 6, mults: 2 };
pub const GAUSS_SEIDEL_COST: KernelCost = KernelCost { adds: 5, mults: 1 };

/// Which Gauss-Seidel line kernel to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GsKernel {
    Naive,
    Interleaved,
}

/// Out-of-place Jacobi update of one line.
///
/// `c` is the center line, `jm`/`jp` the j-1/j+1 lines and `km`/`kp` the
/// k-1/k+1 lines, all padded. The loop has no carried dependence and
/// vectorizes.
#[inline]
pub fn jacobi_line(
    out: &mut [f64],
    c: &[f64],
    jm: &[f64],
    jp: &[f64],
    km: &[f64],
    kp: &[f64],
    coeffs: StencilCoeffs,
) {
    let n = c.len() - 2;
    let StencilCoeffs { a, b } = coeffs;
    let out = &mut out[1..=n];
    let (west, center, east) = (&c[..n], &c[1..=n], &c[2..n + 2]);
    let (jm, jp, km, kp) = (&jm[1..=n], &jp[1..=n], &km[1..=n], &kp[1..=n]);
    for i in 0..n {
        out[i] = a * center[i] + b * (west[i] + east[i] + jm[i] + jp[i] + km[i] + kp[i]);
    }
}

/// Same arithmetic as [`jacobi_line`] but writes with non-temporal stores where
/// the target is 16-byte aligned. Returns `false` when the platform has no
/// streaming store and the plain path was taken.
pub fn jacobi_line_streaming(
    out: &mut [f64],
    c: &[f64],
    jm: &[f64],
    jp: &[f64],
    km: &[f64],
    kp: &[f64],
    coeffs: StencilCoeffs,
) -> bool {
    #[cfg(target_arch = "x86_64")]
    {
        let n = c.len() - 2;
        let StencilCoeffs { a, b } = coeffs;
        let value =
            |i: usize| a * c[i] + b * (c[i - 1] + c[i + 1] + jm[i] + jp[i] + km[i] + kp[i]);
        let mut i = 1;
        while i <= n && !(out[i..].as_ptr() as usize).is_multiple_of(16) {
            out[i] = value(i);
            i += 1;
        }
        while i < n {
            let pair = [value(i), value(i + 1)];
            // SAFETY: out[i..i+2] is in bounds and 16-byte aligned (checked above, stride 16 bytes).
            unsafe {
                use std::arch::x86_64::{_mm_loadu_pd, _mm_stream_pd};
                _mm_stream_pd(out[i..].as_mut_ptr(), _mm_loadu_pd(pair.as_ptr()));
            }
            i += 2;
        }
        if i <= n {
            out[i] = value(i);
        }
        // Streaming stores are weakly ordered; fence before anyone else can observe the line.
        unsafe { std::arch::x86_64::_mm_sfence() };
        true
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        jacobi_line(out, c, jm, jp, km, kp, coeffs);
        false
    }
}

/// In-place lexicographic Gauss-Seidel update of one line. `c[i-1]` is read
/// after it was overwritten, which is what makes the sweep recursive.
#[inline]
pub fn gs_line(c: &mut [f64], jm: &[f64], jp: &[f64], km: &[f64], kp: &[f64], b: f64) {
    let n = c.len() - 2;
    for i in 1..=n {
        c[i] = b * (c[i - 1] + c[i + 1] + jm[i] + jp[i] + km[i] + kp[i]);
    }
}

/// Gauss-Seidel line update with two interleaved cells.
///
/// The five neighbor terms of cell `i+1` that do not depend on the recursion
/// are summed before cell `i` is finished, which breaks the dependency chain
/// on `c[i-1]` into one add and one multiply per cell. Only the position of
/// the `c[i-1]` term in the sum differs from [`gs_line`].
#[inline]
pub fn gs_line_interleaved(c: &mut [f64], jm: &[f64], jp: &[f64], km: &[f64], kp: &[f64], b: f64) {
    let n = c.len() - 2;
    if n < 2 {
        gs_line(c, jm, jp, km, kp, b);
        return;
    }
    let mut tmp1 = c[2] + jm[1] + jp[1] + km[1] + kp[1];
    for i in 1..n {
        let tmp2 = c[i + 2] + jm[i + 1] + jp[i + 1] + km[i + 1] + kp[i + 1];
        c[i] = b * (c[i - 1] + tmp1);
        tmp1 = tmp2;
    }
    c[n] = b * (c[n - 1] + tmp1);
}

impl GsKernel {
    #[inline]
    pub fn apply(self, c: &mut [f64], jm: &[f64], jp: &[f64], km: &[f64], kp: &[f64], b: f64) {
        match self {
            GsKernel::Naive => gs_line(c, jm, jp, km, kp, b),
            GsKernel::Interleaved => gs_line_interleaved(c, jm, jp, km, kp, b),
        }
    }
}

fn check_line(g: &Grid3D, k: usize, j: usize) -> Result<()> {
    if k >= g.nk() || j >= g.nj() {
        return Err(Error::Bounds(format!(
            "line (k={k}, j={j}) outside interior {}x{}",
            g.nj(),
            g.nk()
        )));
    }
    Ok(())
}

/// Splits `data` into the mutable center line at `off` and its four
/// neighbor lines at `±sj` and `±sk`.
#[inline]
pub(crate) fn split_neighbors(
    data: &mut [f64],
    off: usize,
    len: usize,
    sj: usize,
    sk: usize,
) -> (&mut [f64], &[f64], &[f64], &[f64], &[f64]) {
    let (lo, rest) = data.split_at_mut(off);
    let (center, hi) = rest.split_at_mut(len);
    let jm = &lo[off - sj..off - sj + len];
    let km = &lo[off - sk..off - sk + len];
    let jp = &hi[sj - len..sj];
    let kp = &hi[sk - len..sk];
    (center, jm, jp, km, kp)
}

/// Jacobi update of interior line `(k, j)` from `src` into `dst`.
///
/// Aliased `src`/`dst` storage cannot be expressed here: the borrow rules
/// already forbid passing the same grid twice.
pub fn jacobi_line_update(
    src: &Grid3D,
    dst: &mut Grid3D,
    coeffs: StencilCoeffs,
    k: usize,
    j: usize,
) -> Result<()> {
    if !src.same_shape(dst) {
        return Err(Error::Shape(format!(
            "src {:?} vs dst {:?}",
            src.extents(),
            dst.extents()
        )));
    }
    check_line(src, k, j)?;
    let (k, j) = (k as isize, j as isize);
    let len = src.line_stride();
    let s = src.as_slice();
    let line = |kk: isize, jj: isize| {
        let off = src.line_offset(kk, jj);
        &s[off..off + len]
    };
    let off = dst.line_offset(k, j);
    let out = &mut dst.as_mut_slice()[off..off + len];
    jacobi_line(
        out,
        line(k, j),
        line(k, j - 1),
        line(k, j + 1),
        line(k - 1, j),
        line(k + 1, j),
        coeffs,
    );
    Ok(())
}

fn gs_update_with(g: &mut Grid3D, kernel: GsKernel, b: f64, k: usize, j: usize) -> Result<()> {
    check_line(g, k, j)?;
    let off = g.line_offset(k as isize, j as isize);
    let (len, sj, sk) = (g.line_stride(), g.line_stride(), g.plane_stride());
    let (c, jm, jp, km, kp) = split_neighbors(g.as_mut_slice(), off, len, sj, sk);
    kernel.apply(c, jm, jp, km, kp, b);
    Ok(())
}

/// In-place Gauss-Seidel update of line `(k, j)` with the plain recurrence.
pub fn gs_line_update(g: &mut Grid3D, b: f64, k: usize, j: usize) -> Result<()> {
    gs_update_with(g, GsKernel::Naive, b, k, j)
}

/// In-place Gauss-Seidel update of line `(k, j)` with the interleaved kernel.
/// Lines with `ni < 2` use the plain recurrence.
pub fn gs_line_update_interleaved(g: &mut Grid3D, b: f64, k: usize, j: usize) -> Result<()> {
    gs_update_with(g, GsKernel::Interleaved, b, k, j)
}
