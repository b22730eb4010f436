//! Grids, snapshot matrices and the elementwise arithmetic applied to them
//! before and after forecasting.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};

/// Cell counts of a structured 2-D grid.
///
/// `nx` runs along the streamwise axis, `ny` along the normal axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(invalid!("grid must have at least one cell per axis, got {nx}x{ny}"));
        }
        Ok(Self { nx, ny })
    }

    /// Number of grid points `J = nx * ny`.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of cell `(i, j)`; the streamwise index `i` varies fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i + self.nx * j
    }
}

/// `J x K` matrix of time-equidistant snapshots of a scalar field.
///
/// Column `k` holds snapshot `v_k`, flattened with the streamwise index
/// fastest. Storage is column-major so each snapshot is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotMatrix {
    grid: Grid2D,
    k: usize,
    dt: f64,
    data: Vec<f64>,
}

impl SnapshotMatrix {
    /// Builds a matrix from column-major data, validating every invariant.
    pub fn new(grid: Grid2D, k: usize, dt: f64, data: Vec<f64>) -> Result<Self> {
        if grid.nx == 0 || grid.ny == 0 {
            return Err(invalid!("grid must be non-empty"));
        }
        if k == 0 {
            return Err(invalid!("snapshot matrix needs at least one sample"));
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid!("sampling interval must be positive and finite, got {dt}"));
        }
        if data.len() != grid.len() * k {
            return Err(invalid!("data length {} does not match J*K = {}*{}", data.len(), grid.len(), k));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Validation(alloc::format!("non-finite value at flat position {pos}")));
        }
        Ok(Self { grid, k, dt, data })
    }

    /// Builds a matrix from a list of snapshots of length `J` each.
    pub fn from_columns(grid: Grid2D, dt: f64, columns: &[Vec<f64>]) -> Result<Self> {
        let j = grid.len();
        let mut data = Vec::with_capacity(j * columns.len());
        for (n, c) in columns.iter().enumerate() {
            if c.len() != j {
                return Err(invalid!("snapshot {n} has length {}, expected {j}", c.len()));
            }
            data.extend_from_slice(c);
        }
        Self::new(grid, columns.len(), dt, data)
    }

    pub fn grid(&self) -> Grid2D {
        self.grid
    }

    /// Number of grid points per snapshot.
    pub fn j(&self) -> usize {
        self.grid.len()
    }

    /// Number of snapshots.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, k: usize) -> &[f64] {
        let j = self.j();
        &self.data[k * j..(k + 1) * j]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.j())
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[k * self.j() + self.grid.index(i, j)]
    }

    /// Columns `[start, end)` as a new matrix with the same grid and `dt`.
    pub fn slice_columns(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.k {
            return Err(invalid!("column range {start}..{end} invalid for K = {}", self.k));
        }
        let j = self.j();
        Ok(Self { grid: self.grid, k: end - start, dt: self.dt, data: self.data[start * j..end * j].to_vec() })
    }

    /// Selected columns, in the given order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid!("no columns selected"));
        }
        let mut data = Vec::with_capacity(indices.len() * self.j());
        for &k in indices {
            if k >= self.k {
                return Err(invalid!("column {k} out of range for K = {}", self.k));
            }
            data.extend_from_slice(self.column(k));
        }
        Ok(Self { grid: self.grid, k: indices.len(), dt: self.dt, data })
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.k != other.k || self.dt != other.dt {
            return Err(invalid!(
                "shape mismatch: {}x{}x{} (dt {}) vs {}x{}x{} (dt {})",
                self.grid.nx,
                self.grid.ny,
                self.k,
                self.dt,
                other.grid.nx,
                other.grid.ny,
                other.k,
                other.dt
            ));
        }
        Ok(())
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.k, self.dt, self.data.iter().map(|&x| f(x)).collect())
    }

    fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Self::new(self.grid, self.k, self.dt, data)
    }
}

/// Keeps normal-axis indices `0, step, 2*step, ...` of every snapshot.
pub fn downsample_columns(v: &SnapshotMatrix, step: usize) -> Result<SnapshotMatrix> {
    if step == 0 {
        return Err(invalid!("downsampling step must be positive"));
    }
    let grid = v.grid();
    if grid.ny < step {
        return Err(invalid!("normal-axis size {} smaller than step {step}", grid.ny));
    }
    let kept: Vec<usize> = (0..grid.ny).step_by(step).collect();
    let out_grid = Grid2D { nx: grid.nx, ny: kept.len() };
    let mut data = Vec::with_capacity(out_grid.len() * v.k());
    for col in v.columns() {
        for &j in &kept {
            data.extend_from_slice(&col[j * grid.nx..(j + 1) * grid.nx]);
        }
    }
    SnapshotMatrix::new(out_grid, v.k(), v.dt(), data)
}

/// Elementwise `multi - single`.
pub fn subtract_baseline(multi: &SnapshotMatrix, single: &SnapshotMatrix) -> Result<SnapshotMatrix> {
    multi.zip(single, |a, b| a - b)
}

/// Elementwise `pred + single`; undoes [`subtract_baseline`].
pub fn add_baseline(pred: &SnapshotMatrix, single: &SnapshotMatrix) -> Result<SnapshotMatrix> {
    pred.zip(single, |a, b| a + b)
}

/// Global min-max scaling parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub min: f64,
    pub max: f64,
}

impl ScalingParams {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(invalid!("scaling requires finite max > min, got [{min}, {max}]"));
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn invert(&self, y: f64) -> f64 {
        y * (self.max - self.min) + self.min
    }

    pub fn apply_slice(&self, xs: &mut [f64]) {
        xs.iter_mut().for_each(|x| *x = self.apply(*x));
    }

    pub fn invert_slice(&self, ys: &mut [f64]) {
        ys.iter_mut().for_each(|y| *y = self.invert(*y));
    }

    fn check(&self) -> Result<()> {
        Self::new(self.min, self.max).map(|_| ())
    }
}

/// Global minimum and maximum of `v`. Callers pass the training portion only.
pub fn fit_minmax(v: &SnapshotMatrix) -> Result<ScalingParams> {
    let (min, max) = v.data().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if max <= min {
        return Err(Error::DegenerateScaling { count: v.data().len(), value: min });
    }
    Ok(ScalingParams { min, max })
}

/// Maps every value through `x -> (x - min) / (max - min)`, without clamping.
pub fn apply_minmax(v: &SnapshotMatrix, p: ScalingParams) -> Result<SnapshotMatrix> {
    p.check()?;
    v.map(|x| p.apply(x))
}

/// Inverse of [`apply_minmax`].
pub fn invert_minmax(v: &SnapshotMatrix, p: ScalingParams) -> Result<SnapshotMatrix> {
    p.check()?;
    v.map(|y| p.invert(y))
}
