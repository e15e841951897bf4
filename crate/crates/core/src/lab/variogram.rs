//! Empirical semivariogram of analysis fields.

use std::collections::BTreeMap;

use super::stats::CompensatedSum;
use crate::grid::{GridGeometry, StateLayout, StateVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariogramBin {
    /// Lag in grid spacings.
    pub lag: usize,
    pub pairs: usize,
    pub gamma: f64,
}

/// `γ(h) = Σ (z_i − z_j)² / (2 |N(h)|)` over location pairs whose distance
/// rounds to `h` spacings, for one composition, pooled over `fields`.
pub fn empirical_variogram(
    grid: &GridGeometry,
    layout: &StateLayout,
    composition: usize,
    fields: &[&StateVector],
    max_lag: usize,
) -> Vec<VariogramBin> {
    let p = layout.n_compositions();
    let mut bins: BTreeMap<usize, (usize, CompensatedSum)> = BTreeMap::new();
    for i in 0..grid.n_cells() {
        for j in (i + 1)..grid.n_cells() {
            let lag = (grid.distance(i, j) / grid.spacing()).round() as usize;
            if lag == 0 || lag > max_lag {
                continue;
            }
            let entry = bins.entry(lag).or_default();
            for x in fields {
                let d = x.values()[i * p + composition] - x.values()[j * p + composition];
                entry.0 += 1;
                entry.1.add(d * d);
            }
        }
    }
    bins.into_iter()
        .map(|(lag, (pairs, sum))| VariogramBin {
            lag,
            pairs,
            gamma: sum.value() / (2.0 * pairs as f64),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_field() {
        let grid = GridGeometry::line(4, 1.0).unwrap();
        let layout = StateLayout::new(4, 1).unwrap();
        let x = StateVector::from_slice(&[0.0, 1.0, 2.0, 3.0], 0).unwrap();
        let v = empirical_variogram(&grid, &layout, 0, &[&x], 10);
        assert_eq!(v.len(), 3);
        assert_eq!((v[0].lag, v[0].pairs, v[0].gamma), (1, 3, 0.5));
        assert_eq!((v[2].lag, v[2].pairs, v[2].gamma), (3, 1, 4.5));
    }

    #[test]
    fn constant_field_is_flat_zero() {
        let grid = GridGeometry::square(3, 2.0).unwrap();
        let layout = StateLayout::new(9, 2).unwrap();
        let x = StateVector::from_slice(&[1.5; 18], 0).unwrap();
        assert!(empirical_variogram(&grid, &layout, 1, &[&x], 5).iter().all(|b| b.gamma == 0.0));
    }
}
