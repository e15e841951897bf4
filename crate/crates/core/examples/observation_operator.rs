//! Interpolation weights of `H` on a line and on a square grid.

use fourdvar::grid::{CompositionSet, GridGeometry, StateLayout, StateVector};
use fourdvar::obs_operator::{build_h, predict_observations, ObservationSite};

fn main() -> fourdvar::Result<()> {
    let comps = CompositionSet::new(["PM25", "BC"])?;

    let line = GridGeometry::line(5, 1.0)?;
    let layout = StateLayout::for_grid(&line, &comps);
    let sites = vec![ObservationSite::new(vec![1.25], 0), ObservationSite::new(vec![3.5], 1)];
    let h = build_h(&line, &layout, &sites)?;
    println!("line, centroids {:?}", line.axis());
    for (site, row) in sites.iter().zip(h.rows()) {
        println!("  site {:?} comp {} -> {:?}", site.location, site.composition, row);
    }
    let x = StateVector::new(nalgebra::DVector::from_fn(layout.len(), |i, _| i as f64), 0)?;
    println!("  H x = {:?}", predict_observations(&h, &x)?.as_slice());

    let square = GridGeometry::square(3, 1.0)?;
    let layout = StateLayout::for_grid(&square, &comps);
    let sites = vec![ObservationSite::new(vec![0.5, 1.25], 0)];
    let h = build_h(&square, &layout, &sites)?;
    println!("square 3x3, site (0.5, 1.25) -> {:?}", h.rows()[0]);
    let total: f64 = h.rows()[0].iter().map(|(_, w)| w).sum();
    println!("  weights sum to {total}");
    Ok(())
}
