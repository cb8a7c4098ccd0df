//! Cache-line aligned `f64` storage.

use crate::error::{Error, Result};

pub const CACHE_LINE: usize = 64;
const LANES: usize = CACHE_LINE / std::mem::size_of::<f64>();

#[repr(C, align(64))]
#[derive(Clone, Copy)]
struct Line([f64; LANES]);

/// Zero-initialized `f64` buffer whose element `lead` sits on a 64-byte boundary.
#[derive(Clone)]
pub struct AlignedVec {
    lines: Vec<Line>,
    start: usize,
    len: usize,
}

impl AlignedVec {
    pub fn zeroed(len: usize, lead: usize) -> Result<Self> {
        let start = (LANES - lead % LANES) % LANES;
        let total = start
            .checked_add(len)
            .ok_or(Error::Resource { bytes: usize::MAX })?;
        let n_lines = total.div_ceil(LANES);
        let mut lines = Vec::new();
        lines.try_reserve_exact(n_lines).map_err(|_| Error::Resource {
            bytes: n_lines.saturating_mul(CACHE_LINE),
        })?;
        lines.resize(n_lines, Line([0.0; LANES]));
        Ok(Self { lines, start, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        // SAFETY: `Line` is a repr(C) array of f64 without padding, the vector holds
        // at least `start + len` contiguous f64 values.
        unsafe {
            std::slice::from_raw_parts((self.lines.as_ptr() as *const f64).add(self.start), self.len)
        }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        // SAFETY: see `as_slice`; unique borrow of `self`.
        unsafe {
            std::slice::from_raw_parts_mut(
                (self.lines.as_mut_ptr() as *mut f64).add(self.start),
                self.len,
            )
        }
    }
}

impl std::fmt::Debug for AlignedVec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlignedVec").field("len", &self.len).finish()
    }
}
