//! Observation operator: linear interpolation from gridded state to
//! observation locations, one composition per observation.

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Result};
use crate::grid::{GridGeometry, StateLayout, StateVector};

/// One scalar measurement of one composition at a point of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSite {
    pub location: Vec<f64>,
    pub composition: usize,
}

impl ObservationSite {
    pub fn new(location: Vec<f64>, composition: usize) -> Self {
        Self {
            location,
            composition,
        }
    }
}

/// Sites observed at one step offset inside the assimilation window.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTime {
    /// Steps after the window start, `0..=steps_per_window`.
    pub offset: usize,
    pub sites: Vec<ObservationSite>,
}

/// Observation layout for a window. Offsets include both window endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationGeometry {
    times: Vec<ObservationTime>,
}

impl ObservationGeometry {
    pub fn new(
        grid: &GridGeometry,
        layout: &StateLayout,
        steps_per_window: usize,
        times: Vec<ObservationTime>,
    ) -> Result<Self> {
        for (i, t) in times.iter().enumerate() {
            if t.offset > steps_per_window {
                return Err(domain(format!(
                    "observation offset {} lies outside the window of {steps_per_window} steps",
                    t.offset
                )));
            }
            if i > 0 && times[i - 1].offset >= t.offset {
                return Err(domain("observation offsets must be strictly increasing"));
            }
            for site in &t.sites {
                check_site(grid, layout, site)?;
            }
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[ObservationTime] {
        &self.times
    }

    /// Interpolation operators, one per observation time.
    pub fn operators(&self, grid: &GridGeometry, layout: &StateLayout) -> Result<Vec<ObsOperator>> {
        self.times
            .iter()
            .map(|t| build_h(grid, layout, &t.sites))
            .collect()
    }
}

fn check_site(grid: &GridGeometry, layout: &StateLayout, site: &ObservationSite) -> Result<()> {
    if !grid.contains(&site.location) {
        return Err(domain(format!(
            "observation location {:?} lies outside the grid hull",
            site.location
        )));
    }
    if site.composition >= layout.n_compositions() {
        return Err(domain(format!(
            "observation composition {} out of range",
            site.composition
        )));
    }
    Ok(())
}

/// Sparse `m_obs × n` interpolation matrix; each row holds convex weights
/// on the cells bracketing one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsOperator {
    n_state: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ObsOperator {
    /// Direct construction from sparse rows, validated against the row
    /// invariants (weights in `[0, 1]`, unit row sums).
    pub fn from_rows(n_state: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            for &(col, w) in row {
                if col >= n_state {
                    return Err(domain(format!("row {r} references column {col} >= {n_state}")));
                }
                if !(0.0..=1.0).contains(&w) {
                    return Err(domain(format!("row {r} weight {w} outside [0, 1]")));
                }
                sum += w;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(domain(format!("row {r} sums to {sum}, expected 1")));
            }
        }
        Ok(Self { n_state, rows })
    }

    /// Rows selecting single state entries.
    pub fn selection(n_state: usize, indices: &[usize]) -> Result<Self> {
        Self::from_rows(n_state, indices.iter().map(|&i| vec![(i, 1.0)]).collect())
    }

    pub fn n_obs(&self) -> usize {
        self.rows.len()
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.rows.len(), self.n_state);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, w) in row {
                h[(r, c)] += w;
            }
        }
        h
    }

    /// `H x` on a raw vector.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|row| row.iter().map(|&(c, w)| w * x[c]).sum::<f64>()),
        )
    }

    /// Gather columns through an index map (see `grid::permute_vector`).
    pub fn permute_columns(&self, map: &[usize]) -> Self {
        let mut inverse = vec![0; map.len()];
        for (new, &old) in map.iter().enumerate() {
            inverse[old] = new;
        }
        Self {
            n_state: self.n_state,
            rows: self
                .rows
                .iter()
                .map(|row| row.iter().map(|&(c, w)| (inverse[c], w)).collect())
                .collect(),
        }
    }
}

/// Interpolation weights of a coordinate on a uniform axis: the bracketing
/// centroids `x2 ≤ xT ≤ x3` receive `α = (x3 − xT)/(x3 − x2)` and
/// `β = (xT − x2)/(x3 − x2)`; a coordinate on a centroid gets a single 1.
fn axis_weights(axis: &[f64], coord: f64) -> Vec<(usize, f64)> {
    let last = axis.len() - 1;
    if let Some(i) = axis.iter().position(|&c| c == coord) {
        return vec![(i, 1.0)];
    }
    let lower = axis
        .iter()
        .rposition(|&c| c < coord)
        .unwrap_or(0)
        .min(last - 1);
    let (x2, x3) = (axis[lower], axis[lower + 1]);
    let beta = (coord - x2) / (x3 - x2);
    let alpha = 1.0 - beta;
    vec![(lower, alpha), (lower + 1, beta)]
}

/// Build `H` for a set of observation sites.
pub fn build_h(grid: &GridGeometry, layout: &StateLayout, sites: &[ObservationSite]) -> Result<ObsOperator> {
    let axis = grid.axis();
    let p = layout.n_compositions();
    let mut rows = Vec::with_capacity(sites.len());
    for site in sites {
        check_site(grid, layout, site)?;
        let row = match grid.dim() {
            1 => axis_weights(&axis, site.location[0])
                .into_iter()
                .map(|(ix, w)| (grid.cell_at(ix, 0) * p + site.composition, w))
                .collect(),
            _ => {
                let wx = axis_weights(&axis, site.location[0]);
                let wy = axis_weights(&axis, site.location[1]);
                let mut row = Vec::with_capacity(4);
                for &(ix, a) in &wx {
                    for &(iy, b) in &wy {
                        row.push((grid.cell_at(ix, iy) * p + site.composition, a * b));
                    }
                }
                row
            }
        };
        rows.push(row);
    }
    ObsOperator::from_rows(layout.len(), rows)
}

/// Predicted observations `H x`.
pub fn predict_observations(h: &ObsOperator, x: &StateVector) -> Result<DVector<f64>> {
    if x.len() != h.n_state() {
        return Err(domain(format!(
            "state length {} does not match operator width {}",
            x.len(),
            h.n_state()
        )));
    }
    Ok(h.apply(x.values()))
}
