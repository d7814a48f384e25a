//! Uniform Cartesian grids with cell-centered fields and zero-flux boundaries.
//!
//! Fields are stored row-major (last axis fastest). Face arrays keep the
//! same layout with the face axis extended by one, so face `k` along axis `a`
//! separates cells `k - 1` and `k`; faces `0` and `n` sit on the boundary and
//! always carry zero flux.

use thiserror::Error;

pub const MAX_DIM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1, 2 or 3, got {0}")]
    InvalidDimension(usize),
    #[error("expected {expected} entries for {what}, got {got}")]
    AxisCount {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("axis {axis} needs at least 2 cells, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis} length must be positive and finite, got {length}")]
    InvalidLength { axis: usize, length: f64 },
    #[error("field has {got} values but the grid has {expected} cells")]
    SizeMismatch { expected: usize, got: usize },
    #[error("field value at cell {index} is not finite")]
    NonFinite { index: usize },
    #[error("norm exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("total cell count overflows")]
    TooManyCells,
}

/// Axis-aligned box `[0, L_0] x ... x [0, L_{d-1}]` split into uniform cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; MAX_DIM],
    lengths: [f64; MAX_DIM],
    spacing: [f64; MAX_DIM],
}

impl Grid {
    pub fn new(dim: usize, cells: &[usize], lengths: &[f64]) -> Result<Self, GridError> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(GridError::InvalidDimension(dim));
        }
        if cells.len() != dim {
            return Err(GridError::AxisCount {
                what: "cells",
                expected: dim,
                got: cells.len(),
            });
        }
        if lengths.len() != dim {
            return Err(GridError::AxisCount {
                what: "lengths",
                expected: dim,
                got: lengths.len(),
            });
        }
        let mut grid = Grid {
            dim,
            cells: [1; MAX_DIM],
            lengths: [1.0; MAX_DIM],
            spacing: [1.0; MAX_DIM],
        };
        for axis in 0..dim {
            if cells[axis] < 2 {
                return Err(GridError::TooFewCells {
                    axis,
                    cells: cells[axis],
                });
            }
            if !(lengths[axis] > 0.0 && lengths[axis].is_finite()) {
                return Err(GridError::InvalidLength {
                    axis,
                    length: lengths[axis],
                });
            }
            grid.cells[axis] = cells[axis];
            grid.lengths[axis] = lengths[axis];
            grid.spacing[axis] = lengths[axis] / cells[axis] as f64;
        }
        cells
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .ok_or(GridError::TooManyCells)?;
        Ok(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.dim]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    /// |Ω|
    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Distance in the flat index between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        self.cells[axis + 1..self.dim].iter().product()
    }

    /// `(outer, n, inner)` such that cell `(o, i, r)` lives at `(o * n + i) * inner + r`.
    pub(crate) fn axis_layout(&self, axis: usize) -> (usize, usize, usize) {
        let outer = self.cells[..axis].iter().product();
        (outer, self.cells[axis], self.stride(axis))
    }

    pub fn face_count(&self, axis: usize) -> usize {
        let (outer, n, inner) = self.axis_layout(axis);
        outer * (n + 1) * inner
    }

    /// Multi-index of a flat cell index.
    pub fn unravel(&self, mut index: usize) -> [usize; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for axis in (0..self.dim).rev() {
            out[axis] = index % self.cells[axis];
            index /= self.cells[axis];
        }
        out
    }

    pub fn cell_center(&self, index: usize) -> [f64; MAX_DIM] {
        let idx = self.unravel(index);
        let mut x = [0.0; MAX_DIM];
        for axis in 0..self.dim {
            x[axis] = (idx[axis] as f64 + 0.5) * self.spacing[axis];
        }
        x
    }
}

/// Same as [`Grid::new`].
pub fn make_grid(dim: usize, cells: &[usize], lengths: &[f64]) -> Result<Grid, GridError> {
    Grid::new(dim, cells, lengths)
}

/// Cell-centered scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Field {
            grid,
            values: vec![value; grid.len()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::SizeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Field { grid, values })
    }

    /// Samples `f` at every cell center. Only the first `dim` coordinates are meaningful.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.cell_center(i);
                f(&x[..grid.dim()])
            })
            .collect();
        Field { grid, values }
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Mean value over Ω.
    pub fn mean(&self) -> f64 {
        integrate(self) / self.grid.volume()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One value per cell face, per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFlux {
    grid: Grid,
    faces: Vec<Vec<f64>>,
}

impl FaceFlux {
    pub fn zeros(grid: Grid) -> Self {
        FaceFlux {
            grid,
            faces: (0..grid.dim())
                .map(|a| vec![0.0; grid.face_count(a)])
                .collect(),
        }
    }

    /// Builds a flux from interior values produced by `f(axis, left_cell, right_cell)`.
    /// Boundary faces are left at zero.
    pub fn from_interior(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut q = FaceFlux::zeros(grid);
        for axis in 0..grid.dim() {
            let (outer, n, inner) = grid.axis_layout(axis);
            let faces = &mut q.faces[axis];
            for o in 0..outer {
                for k in 1..n {
                    for r in 0..inner {
                        let left = (o * n + k - 1) * inner + r;
                        faces[(o * (n + 1) + k) * inner + r] = f(axis, left, left + inner);
                    }
                }
            }
        }
        q
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        &self.faces[axis]
    }

    /// Mutable access to the interior faces of one axis. Boundary faces stay zero.
    pub fn for_each_interior_mut(&mut self, mut f: impl FnMut(usize, usize, usize, &mut f64)) {
        for axis in 0..self.grid.dim() {
            let (outer, n, inner) = self.grid.axis_layout(axis);
            let faces = &mut self.faces[axis];
            for o in 0..outer {
                for k in 1..n {
                    for r in 0..inner {
                        let left = (o * n + k - 1) * inner + r;
                        f(axis, left, left + inner, &mut faces[(o * (n + 1) + k) * inner + r]);
                    }
                }
            }
        }
    }

    /// `self - other`, face by face.
    pub fn sub(&self, other: &FaceFlux) -> FaceFlux {
        debug_assert_eq!(self.grid, other.grid);
        FaceFlux {
            grid: self.grid,
            faces: self
                .faces
                .iter()
                .zip(&other.faces)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.faces
            .iter()
            .flatten()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    pub fn boundary_is_zero(&self) -> bool {
        (0..self.grid.dim()).all(|axis| {
            let (outer, n, inner) = self.grid.axis_layout(axis);
            (0..outer).all(|o| {
                (0..inner).all(|r| {
                    self.faces[axis][(o * (n + 1)) * inner + r] == 0.0
                        && self.faces[axis][(o * (n + 1) + n) * inner + r] == 0.0
                })
            })
        })
    }

    /// Averages the two faces bounding each cell, giving one centered field per axis.
    pub fn to_centers(&self) -> Vec<Field> {
        (0..self.grid.dim())
            .map(|axis| {
                let (outer, n, inner) = self.grid.axis_layout(axis);
                let faces = &self.faces[axis];
                let mut values = vec![0.0; self.grid.len()];
                for o in 0..outer {
                    for i in 0..n {
                        for r in 0..inner {
                            let lo = faces[(o * (n + 1) + i) * inner + r];
                            let hi = faces[(o * (n + 1) + i + 1) * inner + r];
                            values[(o * n + i) * inner + r] = 0.5 * (lo + hi);
                        }
                    }
                }
                Field::from_vec_unchecked(self.grid, values)
            })
            .collect()
    }
}

/// Two-point difference `(f_right - f_left) / h` on every interior face.
pub fn grad_faces(f: &Field) -> FaceFlux {
    let grid = *f.grid();
    let v = f.values();
    FaceFlux::from_interior(grid, |axis, left, right| {
        (v[right] - v[left]) / grid.spacing[axis]
    })
}

/// Conservative divergence: `(q_out - q_in) / h` summed over axes.
pub fn div_faces(q: &FaceFlux) -> Field {
    let grid = *q.grid();
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        let (outer, n, inner) = grid.axis_layout(axis);
        let h = grid.spacing[axis];
        let faces = &q.faces[axis];
        for o in 0..outer {
            for i in 0..n {
                for r in 0..inner {
                    let lo = faces[(o * (n + 1) + i) * inner + r];
                    let hi = faces[(o * (n + 1) + i + 1) * inner + r];
                    out[(o * n + i) * inner + r] += (hi - lo) / h;
                }
            }
        }
    }
    Field::from_vec_unchecked(grid, out)
}

/// Neumann Laplacian, `div_faces(grad_faces(f))` evaluated with the same arithmetic.
pub fn laplacian_neumann(f: &Field) -> Field {
    let mut out = vec![0.0; f.grid().len()];
    laplacian_into(f.grid(), f.values(), &mut out);
    Field::from_vec_unchecked(*f.grid(), out)
}

/// Slice form of [`laplacian_neumann`] for matrix-free solvers.
pub fn laplacian_into(grid: &Grid, f: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for axis in 0..grid.dim() {
        let (outer, n, inner) = grid.axis_layout(axis);
        let h = grid.spacing[axis];
        for o in 0..outer {
            for i in 0..n {
                for r in 0..inner {
                    let c = (o * n + i) * inner + r;
                    // mirrored ghost cells give zero boundary gradients
                    let lo = if i > 0 { (f[c] - f[c - inner]) / h } else { 0.0 };
                    let hi = if i + 1 < n { (f[c + inner] - f[c]) / h } else { 0.0 };
                    out[c] += (hi - lo) / h;
                }
            }
        }
    }
}

/// Neumaier-compensated sum, in index order.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// ∫_Ω f dx by the midpoint rule.
pub fn integrate(f: &Field) -> f64 {
    compensated_sum(f.values().iter().copied()) * f.grid().cell_volume()
}

/// (∫|f|^p)^{1/p}, or the max norm for `p = ∞`.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64, GridError> {
    if p.is_nan() || p < 1.0 {
        return Err(GridError::InvalidExponent(p));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let vol = f.grid().cell_volume();
    let sum = if p == 1.0 {
        compensated_sum(f.values().iter().map(|v| v.abs()))
    } else if p == 2.0 {
        compensated_sum(f.values().iter().map(|v| v * v))
    } else {
        compensated_sum(f.values().iter().map(|v| v.abs().powf(p)))
    };
    Ok((sum * vol).powf(1.0 / p))
}
