//! Grid geometry, state-vector layout and indexing.
//!
//! States are stored location-major: the `P` composition values of one grid
//! cell are contiguous, so the flat index of `(location, composition)` is
//! `location * P + composition`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Uniform 1-D line or 2-D square grid of cell centroids.
///
/// 2-D centroids are ordered lexicographically, `(x, y)` with `x` major, so
/// cell `i` sits at `(i / side, i % side) * spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry {
    dim: usize,
    side: usize,
    spacing: f64,
}

impl GridGeometry {
    pub fn new(dim: usize, cells_per_axis: usize, spacing: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(domain(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(domain(format!("grid spacing must be positive, got {spacing}")));
        }
        let grid = Self {
            dim,
            side: cells_per_axis,
            spacing,
        };
        if grid.n_cells() < 2 {
            return Err(domain("grid needs at least two cells"));
        }
        Ok(grid)
    }

    pub fn line(n_cells: usize, spacing: f64) -> Result<Self> {
        Self::new(1, n_cells, spacing)
    }

    pub fn square(cells_per_side: usize, spacing: f64) -> Result<Self> {
        Self::new(2, cells_per_side, spacing)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Cells along each axis.
    pub fn side(&self) -> usize {
        self.side
    }

    /// Total number of cells `N`.
    pub fn n_cells(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// Integer coordinates of a cell; the second entry is 0 on a line.
    pub fn cell_coords(&self, cell: usize) -> (usize, usize) {
        match self.dim {
            1 => (cell, 0),
            _ => (cell / self.side, cell % self.side),
        }
    }

    pub fn cell_at(&self, ix: usize, iy: usize) -> usize {
        match self.dim {
            1 => ix,
            _ => ix * self.side + iy,
        }
    }

    pub fn centroid(&self, cell: usize) -> Vec<f64> {
        let (ix, iy) = self.cell_coords(cell);
        match self.dim {
            1 => vec![ix as f64 * self.spacing],
            _ => vec![ix as f64 * self.spacing, iy as f64 * self.spacing],
        }
    }

    pub fn centroids(&self) -> Vec<Vec<f64>> {
        (0..self.n_cells()).map(|c| self.centroid(c)).collect()
    }

    /// Coordinates along one axis, shared by every row/column of the grid.
    pub fn axis(&self) -> Vec<f64> {
        (0..self.side).map(|i| i as f64 * self.spacing).collect()
    }

    /// Euclidean distance between two cell centroids.
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let (ax, ay) = self.cell_coords(a);
        let (bx, by) = self.cell_coords(b);
        let dx = ax.abs_diff(bx) as f64;
        let dy = ay.abs_diff(by) as f64;
        (dx * dx + dy * dy).sqrt() * self.spacing
    }

    /// First-order neighbours (cells at distance `spacing`), without wrap-around.
    pub fn neighbors(&self, cell: usize) -> Vec<usize> {
        let (ix, iy) = self.cell_coords(cell);
        let mut out = Vec::with_capacity(4);
        if ix > 0 {
            out.push(self.cell_at(ix - 1, iy));
        }
        if ix + 1 < self.side {
            out.push(self.cell_at(ix + 1, iy));
        }
        if self.dim == 2 {
            if iy > 0 {
                out.push(self.cell_at(ix, iy - 1));
            }
            if iy + 1 < self.side {
                out.push(self.cell_at(ix, iy + 1));
            }
        }
        out
    }

    /// Cell reached by a periodic translation of `(dx, dy)` cells.
    pub fn translate(&self, cell: usize, dx: isize, dy: isize) -> usize {
        let side = self.side as isize;
        let (ix, iy) = self.cell_coords(cell);
        let nx = (ix as isize + dx).rem_euclid(side) as usize;
        if self.dim == 1 {
            return nx;
        }
        let ny = (iy as isize + dy).rem_euclid(side) as usize;
        self.cell_at(nx, ny)
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        let hi = (self.side - 1) as f64 * self.spacing;
        point.len() == self.dim && point.iter().all(|&p| p.is_finite() && (0.0..=hi).contains(&p))
    }
}

/// Named atmospheric compositions carried at every grid cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct CompositionSet {
    names: Vec<String>,
}

impl CompositionSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(domain("at least one composition is required"));
        }
        for (i, a) in names.iter().enumerate() {
            if names[..i].contains(a) {
                return Err(domain(format!("duplicate composition name {a:?}")));
            }
        }
        Ok(Self { names })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.len())?;
        Self::new(order.iter().map(|&i| self.names[i].clone()))
    }
}

impl TryFrom<Vec<String>> for CompositionSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<CompositionSet> for Vec<String> {
    fn from(set: CompositionSet) -> Self {
        set.names
    }
}

/// Location-major layout of `N` cells times `P` compositions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    n_cells: usize,
    n_compositions: usize,
}

impl StateLayout {
    pub fn new(n_cells: usize, n_compositions: usize) -> Result<Self> {
        if n_cells == 0 || n_compositions == 0 {
            return Err(domain("layout needs at least one cell and one composition"));
        }
        Ok(Self {
            n_cells,
            n_compositions,
        })
    }

    pub fn for_grid(grid: &GridGeometry, compositions: &CompositionSet) -> Self {
        Self {
            n_cells: grid.n_cells(),
            n_compositions: compositions.len(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_compositions(&self) -> usize {
        self.n_compositions
    }

    /// State dimension `n = N * P`.
    pub fn len(&self) -> usize {
        self.n_cells * self.n_compositions
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat_index(&self, location: usize, composition: usize) -> Result<usize> {
        if location >= self.n_cells {
            return Err(domain(format!(
                "location {location} out of range for {} cells",
                self.n_cells
            )));
        }
        if composition >= self.n_compositions {
            return Err(domain(format!(
                "composition {composition} out of range for {} compositions",
                self.n_compositions
            )));
        }
        Ok(location * self.n_compositions + composition)
    }

    /// Inverse of [`flat_index`](Self::flat_index).
    pub fn split_index(&self, flat: usize) -> Result<(usize, usize)> {
        if flat >= self.len() {
            return Err(domain(format!("flat index {flat} out of range for n = {}", self.len())));
        }
        Ok((flat / self.n_compositions, flat % self.n_compositions))
    }

    /// `perm[j]` is the location-major index of the `j`-th entry in
    /// composition-major order. Block-diagonal per-composition matrices are
    /// block diagonal after applying this permutation.
    pub fn composition_major_permutation(&self) -> Vec<usize> {
        (0..self.n_compositions)
            .flat_map(|c| (0..self.n_cells).map(move |l| l * self.n_compositions + c))
            .collect()
    }

    /// Index map for reordering compositions: the new state at flat index `i`
    /// takes the old value at `map[i]`. `order[c']` names the old composition
    /// moved into slot `c'`.
    pub fn composition_reorder_map(&self, order: &[usize]) -> Result<Vec<usize>> {
        check_permutation(order, self.n_compositions)?;
        Ok((0..self.len())
            .map(|i| {
                let (l, c) = (i / self.n_compositions, i % self.n_compositions);
                l * self.n_compositions + order[c]
            })
            .collect())
    }

    pub fn check(&self, state: &StateVector) -> Result<()> {
        if state.len() != self.len() {
            return Err(domain(format!(
                "state has length {}, layout expects {}",
                state.len(),
                self.len()
            )));
        }
        Ok(())
    }
}

fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(domain(format!("permutation has length {}, expected {n}", order.len())));
    }
    for &i in order {
        if i >= n || seen[i] {
            return Err(domain(format!("{order:?} is not a permutation of 0..{n}")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Gather `v[map[i]]` into position `i`.
pub fn permute_vector(v: &DVector<f64>, map: &[usize]) -> DVector<f64> {
    DVector::from_iterator(map.len(), map.iter().map(|&j| v[j]))
}

/// Apply the same gather to rows and columns.
pub fn permute_symmetric(m: &DMatrix<f64>, map: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(map.len(), map.len(), |i, j| m[(map[i], map[j])])
}

/// Field values at one time step, location-major.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    values: DVector<f64>,
    time_index: u64,
}

impl StateVector {
    /// `time_index` counts model steps of length `δt`.
    pub fn new(values: DVector<f64>, time_index: u64) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(domain(format!("state entry {i} is not finite")));
        }
        Ok(Self { values, time_index })
    }

    pub fn from_slice(values: &[f64], time_index: u64) -> Result<Self> {
        Self::new(DVector::from_column_slice(values), time_index)
    }

    pub fn zeros(n: usize, time_index: u64) -> Self {
        Self {
            values: DVector::zeros(n),
            time_index,
        }
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn time_index(&self) -> u64 {
        self.time_index
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_time_index(mut self, time_index: u64) -> Self {
        self.time_index = time_index;
        self
    }

    /// The `P` composition values at one cell.
    pub fn block(&self, layout: &StateLayout, location: usize) -> &[f64] {
        let p = layout.n_compositions();
        &self.values.as_slice()[location * p..(location + 1) * p]
    }
}
