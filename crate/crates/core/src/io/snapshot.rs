//! Binary state snapshots.
//!
//! Layout, all little-endian: magic `NTX1`, `u8` dim, `u64` cells per axis,
//! `f64` lengths per axis, `f64` time, then `u` and `v` as row-major `f64`.

use std::path::Path;

use thiserror::Error;

use crate::grid::{Field, Grid};
use crate::solver::SimState;

pub const MAGIC: &[u8; 4] = b"NTX1";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {0:?}, expected NTX1")]
    BadMagic([u8; 4]),
    #[error("snapshot truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("snapshot dimension {0} is not 1, 2 or 3")]
    BadDimension(u8),
    #[error("snapshot grid is invalid: {0}")]
    BadGrid(String),
    #[error("snapshot has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("snapshot grid {found:?} does not match expected {expected:?}")]
    GridMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("snapshot holds an invalid state: {0}")]
    BadState(String),
}

pub fn encode_snapshot(s: &SimState) -> Vec<u8> {
    let grid = s.grid();
    let n = grid.len();
    let mut out = Vec::with_capacity(4 + 1 + 16 * grid.dim() + 8 + 16 * n);
    out.extend_from_slice(MAGIC);
    out.push(grid.dim() as u8);
    for &c in grid.cells() {
        out.extend_from_slice(&(c as u64).to_le_bytes());
    }
    for &l in grid.lengths() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&s.t.to_le_bytes());
    for &x in s.u.values().iter().chain(s.v.values()) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnapshotError> {
        let end = self.pos.checked_add(n).ok_or(SnapshotError::Truncated {
            needed: usize::MAX,
            found: self.bytes.len(),
        })?;
        if end > self.bytes.len() {
            return Err(SnapshotError::Truncated {
                needed: end,
                found: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64, SnapshotError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, SnapshotError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<SimState, SnapshotError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let dim = r.take(1)?[0];
    if !(1..=3).contains(&dim) {
        return Err(SnapshotError::BadDimension(dim));
    }
    let mut cells = Vec::with_capacity(dim as usize);
    for _ in 0..dim {
        let c = r.u64()?;
        cells.push(usize::try_from(c).map_err(|_| SnapshotError::BadGrid(format!("{c} cells")))?);
    }
    let mut lengths = Vec::with_capacity(dim as usize);
    for _ in 0..dim {
        lengths.push(r.f64()?);
    }
    let grid = Grid::new(dim as usize, &cells, &lengths)
        .map_err(|e| SnapshotError::BadGrid(e.to_string()))?;
    let t = r.f64()?;

    let n = cells
        .iter()
        .try_fold(1usize, |a, &c| a.checked_mul(c))
        .ok_or_else(|| SnapshotError::BadGrid("cell count overflows".into()))?;
    let needed = n
        .checked_mul(16)
        .and_then(|b| b.checked_add(r.pos))
        .ok_or_else(|| SnapshotError::BadGrid("cell count overflows".into()))?;
    if needed > bytes.len() {
        return Err(SnapshotError::Truncated {
            needed,
            found: bytes.len(),
        });
    }
    let read_field = |r: &mut Reader| -> Result<Vec<f64>, SnapshotError> {
        (0..n).map(|_| r.f64()).collect()
    };
    let u = read_field(&mut r)?;
    let v = read_field(&mut r)?;
    if r.pos != bytes.len() {
        return Err(SnapshotError::TrailingBytes(bytes.len() - r.pos));
    }
    let u = Field::from_values(grid, u).map_err(|e| SnapshotError::BadState(e.to_string()))?;
    let v = Field::from_values(grid, v).map_err(|e| SnapshotError::BadState(e.to_string()))?;
    SimState::new(u, v, t).map_err(|e| SnapshotError::BadState(e.to_string()))
}

pub fn write_snapshot(s: &SimState, path: &Path) -> Result<(), SnapshotError> {
    super::write_atomic(path, &encode_snapshot(s))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<SimState, SnapshotError> {
    decode_snapshot(&std::fs::read(path)?)
}

/// Reads a snapshot and checks it lives on `expected`.
pub fn read_snapshot_on(path: &Path, expected: &Grid) -> Result<SimState, SnapshotError> {
    let s = read_snapshot(path)?;
    if s.grid() != expected {
        return Err(SnapshotError::GridMismatch {
            expected: expected.cells().to_vec(),
            found: s.grid().cells().to_vec(),
        });
    }
    Ok(s)
}
