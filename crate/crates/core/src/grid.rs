//! Halo-padded 3D scalar fields.
//!
//! Storage is k-outer, j-middle, i-contiguous with one ghost layer on every
//! side. Interior coordinates run over `0..n` per axis, the halo sits at `-1`
//! and `n`. Halo cells carry Dirichlet boundary values: they are written once
//! by [`Grid3D::new`] and never touched by any update kernel.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aligned::AlignedVec;
use crate::error::{Error, Result};

/// Ghost-layer width. The 7-point stencil reaches one cell along each axis.
pub const HALO: usize = 1;

/// How a freshly created grid is filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitPattern {
    /// Every cell, halo included, holds the same value.
    Uniform(f64),
    /// `value = i + j + k`, evaluated at halo coordinates too.
    Linear,
    /// Interior drawn uniformly from `[lo, hi)` by a ChaCha8 stream; halo is zero.
    SeededRandom { seed: u64, lo: f64, hi: f64 },
}

impl InitPattern {
    /// Seeded random values in `[0, 1)`.
    pub fn random(seed: u64) -> Self {
        InitPattern::SeededRandom {
            seed,
            lo: 0.0,
            hi: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            InitPattern::Uniform(c) if !c.is_finite() => {
                Err(Error::Config(format!("uniform value {c} is not finite")))
            }
            InitPattern::SeededRandom { lo, hi, .. }
                if !(lo.is_finite() && hi.is_finite() && lo < hi) =>
            {
                Err(Error::Config(format!("random range [{lo}, {hi}) is empty or not finite")))
            }
            _ => Ok(()),
        }
    }
}

/// Location and values of the first cell where two grids differ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellDiff {
    pub k: isize,
    pub j: isize,
    pub i: isize,
    pub left: f64,
    pub right: f64,
}

/// Min / max / sum over the interior plus an FNV-1a hash of the raw bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSummary {
    pub min: f64,
    pub max: f64,
    pub sum: f64,
    pub checksum: u64,
}

impl std::fmt::Display for GridSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "min={:.17e} max={:.17e} sum={:.17e} checksum={:016x}",
            self.min, self.max, self.sum, self.checksum
        )
    }
}

/// Halo-padded 3D grid of doubles.
#[derive(Clone)]
pub struct Grid3D {
    ni: usize,
    nj: usize,
    nk: usize,
    data: AlignedVec,
}

impl std::fmt::Debug for Grid3D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid3D")
            .field("ni", &self.ni)
            .field("nj", &self.nj)
            .field("nk", &self.nk)
            .finish()
    }
}

/// Free-function spelling of [`Grid3D::new`].
pub fn create_grid(ni: usize, nj: usize, nk: usize, pattern: InitPattern) -> Result<Grid3D> {
    Grid3D::new(ni, nj, nk, pattern)
}

impl Grid3D {
    /// Allocates a padded grid and fills interior and halo per `pattern`.
    ///
    /// The allocation places the first interior element of line `(-1, -1)` on a
    /// cache-line boundary, so every line start is aligned whenever
    /// `ni + 2` is a multiple of eight.
    pub fn new(ni: usize, nj: usize, nk: usize, pattern: InitPattern) -> Result<Self> {
        if ni == 0 || nj == 0 || nk == 0 {
            return Err(Error::Dimension(format!(
                "extents must be positive, got {ni}x{nj}x{nk}"
            )));
        }
        pattern.validate()?;
        let len = (ni + 2)
            .checked_mul(nj + 2)
            .and_then(|x| x.checked_mul(nk + 2))
            .ok_or_else(|| Error::Dimension(format!("{ni}x{nj}x{nk} overflows")))?;
        let data = AlignedVec::zeroed(len, HALO)?;
        let mut grid = Grid3D { ni, nj, nk, data };
        grid.fill(pattern);
        Ok(grid)
    }

    fn fill(&mut self, pattern: InitPattern) {
        match pattern {
            InitPattern::Uniform(c) => self.data.as_mut_slice().fill(c),
            InitPattern::Linear => {
                let (ni, nj, nk) = self.padded_ranges();
                for k in nk.clone() {
                    for j in nj.clone() {
                        for i in ni.clone() {
                            let off = self.offset(k, j, i);
                            self.data.as_mut_slice()[off] = (i + j + k) as f64;
                        }
                    }
                }
            }
            InitPattern::SeededRandom { seed, lo, hi } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for k in 0..self.nk as isize {
                    for j in 0..self.nj as isize {
                        let off = self.offset(k, j, 0);
                        let ni = self.ni;
                        for v in &mut self.data.as_mut_slice()[off..off + ni] {
                            *v = rng.gen_range(lo..hi);
                        }
                    }
                }
            }
        }
    }

    fn padded_ranges(
        &self,
    ) -> (
        std::ops::Range<isize>,
        std::ops::Range<isize>,
        std::ops::Range<isize>,
    ) {
        (
            -1..self.ni as isize + 1,
            -1..self.nj as isize + 1,
            -1..self.nk as isize + 1,
        )
    }

    pub fn ni(&self) -> usize {
        self.ni
    }

    pub fn nj(&self) -> usize {
        self.nj
    }

    pub fn nk(&self) -> usize {
        self.nk
    }

    /// Interior extents as `(ni, nj, nk)`.
    pub fn extents(&self) -> (usize, usize, usize) {
        (self.ni, self.nj, self.nk)
    }

    /// Number of interior cells.
    pub fn cells(&self) -> usize {
        self.ni * self.nj * self.nk
    }

    /// Storage length `(ni+2)(nj+2)(nk+2)`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Distance between consecutive j-lines.
    pub fn line_stride(&self) -> usize {
        self.ni + 2
    }

    /// Distance between consecutive k-planes.
    pub fn plane_stride(&self) -> usize {
        (self.ni + 2) * (self.nj + 2)
    }

    pub fn same_shape(&self, other: &Grid3D) -> bool {
        self.extents() == other.extents()
    }

    /// Flat storage offset of `(k, j, i)`; halo coordinates `-1` and `n` are allowed.
    pub fn flat_index(&self, k: isize, j: isize, i: isize) -> Result<usize> {
        let inside = |c: isize, n: usize| (-1..=n as isize).contains(&c);
        if !(inside(k, self.nk) && inside(j, self.nj) && inside(i, self.ni)) {
            return Err(Error::Bounds(format!(
                "({k}, {j}, {i}) outside padded {}x{}x{} box",
                self.ni, self.nj, self.nk
            )));
        }
        Ok(self.offset(k, j, i))
    }

    #[inline]
    pub(crate) fn offset(&self, k: isize, j: isize, i: isize) -> usize {
        debug_assert!(k >= -1 && j >= -1 && i >= -1);
        (k + 1) as usize * self.plane_stride() + (j + 1) as usize * self.line_stride() + (i + 1) as usize
    }

    /// Offset of the first (halo) element of line `(k, j)`.
    #[inline]
    pub(crate) fn line_offset(&self, k: isize, j: isize) -> usize {
        self.offset(k, j, -1)
    }

    /// Value at a padded coordinate. Panics outside the padded box.
    pub fn get(&self, k: isize, j: isize, i: isize) -> f64 {
        let off = self.flat_index(k, j, i).expect("coordinate outside padded box");
        self.data.as_slice()[off]
    }

    /// Overwrites a padded coordinate. Halo writes are allowed here; kernels never do them.
    pub fn set(&mut self, k: isize, j: isize, i: isize, value: f64) -> Result<()> {
        let off = self.flat_index(k, j, i)?;
        self.data.as_mut_slice()[off] = value;
        Ok(())
    }

    /// The padded line `(k, j)`, `ni + 2` values starting at `i = -1`.
    pub fn line(&self, k: isize, j: isize) -> &[f64] {
        let off = self.flat_index(k, j, -1).expect("line outside padded box");
        &self.data.as_slice()[off..off + self.line_stride()]
    }

    pub fn as_slice(&self) -> &[f64] {
        self.data.as_slice()
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        self.data.as_mut_slice()
    }

    /// Copies all values (halo included) from a grid of the same shape.
    pub fn copy_from(&mut self, other: &Grid3D) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.extents(),
                other.extents()
            )));
        }
        self.as_mut_slice().copy_from_slice(other.as_slice());
        Ok(())
    }

    /// Bitwise equality of the full padded storage.
    pub fn bit_eq(&self, other: &Grid3D) -> bool {
        self.same_shape(other) && self.first_difference(other).is_none()
    }

    /// First cell in storage order whose bit pattern differs. `None` for mismatched shapes
    /// is never returned; use [`Grid3D::same_shape`] first.
    pub fn first_difference(&self, other: &Grid3D) -> Option<CellDiff> {
        assert!(self.same_shape(other), "shape mismatch");
        let pos = self
            .as_slice()
            .iter()
            .zip(other.as_slice())
            .position(|(a, b)| a.to_bits() != b.to_bits())?;
        let (li, pj) = (self.line_stride(), self.plane_stride());
        let k = (pos / pj) as isize - 1;
        let j = ((pos % pj) / li) as isize - 1;
        let i = (pos % li) as isize - 1;
        Some(CellDiff {
            k,
            j,
            i,
            left: self.as_slice()[pos],
            right: other.as_slice()[pos],
        })
    }

    /// Iterates interior values in k, j, i order.
    pub fn interior(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.nk as isize).flat_map(move |k| {
            (0..self.nj as isize).flat_map(move |j| {
                let off = self.offset(k, j, 0);
                self.as_slice()[off..off + self.ni].iter().copied()
            })
        })
    }

    pub fn summary(&self) -> GridSummary {
        const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut s = GridSummary {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            sum: 0.0,
            checksum: FNV_OFFSET,
        };
        for v in self.interior() {
            s.min = s.min.min(v);
            s.max = s.max.max(v);
            s.sum += v;
            for byte in v.to_bits().to_le_bytes() {
                s.checksum ^= byte as u64;
                s.checksum = s.checksum.wrapping_mul(FNV_PRIME);
            }
        }
        s
    }

    /// Writes `ni, nj, nk` as little-endian u64 followed by the interior values,
    /// k-outer and i-contiguous, as little-endian f64.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<()> {
        for n in [self.ni, self.nj, self.nk] {
            out.write_all(&(n as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.ni * 8);
        for k in 0..self.nk as isize {
            for j in 0..self.nj as isize {
                buf.clear();
                let off = self.offset(k, j, 0);
                for v in &self.as_slice()[off..off + self.ni] {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
                out.write_all(&buf)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn dump_to_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_dump(std::io::BufWriter::new(file))
    }
}

/// Reads a dump written by [`Grid3D::write_dump`]: `((ni, nj, nk), interior values)`.
pub fn read_dump<R: Read>(mut input: R) -> Result<((usize, usize, usize), Vec<f64>)> {
    let mut word = [0u8; 8];
    let mut ext = [0usize; 3];
    for e in &mut ext {
        input.read_exact(&mut word)?;
        *e = u64::from_le_bytes(word) as usize;
    }
    let count = ext[0]
        .checked_mul(ext[1])
        .and_then(|x| x.checked_mul(ext[2]))
        .ok_or_else(|| Error::Dimension("dump header overflows".into()))?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        input.read_exact(&mut word)?;
        values.push(f64::from_le_bytes(word));
    }
    Ok(((ext[0], ext[1], ext[2]), values))
}
