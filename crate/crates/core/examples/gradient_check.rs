//! Compare the analytic gradient of the window cost with central differences.

use std::sync::Arc;

use fourdvar::cost::{eval_j, grad_j, Covariance, WindowObservation, WindowProblem};
use fourdvar::dynamics::{tangent_linear_at_zero, NonlinearModel};
use fourdvar::grid::{CompositionSet, GridGeometry, StateLayout, StateVector};
use fourdvar::obs_operator::{build_h, ObservationSite};
use nalgebra::DVector;

fn main() -> fourdvar::Result<()> {
    let grid = GridGeometry::line(6, 1.0)?;
    let comps = CompositionSet::new(["PM25", "BC"])?;
    let layout = StateLayout::for_grid(&grid, &comps);
    let model = NonlinearModel::advection_diffusion(&grid, &layout, 0.4, 0.2, 1.0)?;
    let tlm = Arc::new(tangent_linear_at_zero(&model));
    let b = Arc::new(Covariance::background_exponential(&grid, &layout, 1.0, 2.0)?);

    let sites: Vec<_> = [0.7, 2.5, 4.1]
        .iter()
        .flat_map(|&x| (0..2).map(move |c| ObservationSite::new(vec![x], c)))
        .collect();
    let h = Arc::new(build_h(&grid, &layout, &sites)?);
    let r = Arc::new(Covariance::observation_diagonal(sites.len(), 0.5)?);
    let observations = (0..=2)
        .map(|offset| WindowObservation {
            offset,
            values: DVector::from_fn(sites.len(), |i, _| (i as f64 * 0.3 + offset as f64).sin()),
            operator: Arc::clone(&h),
            error: Arc::clone(&r),
        })
        .collect();
    let background = StateVector::new(DVector::from_element(layout.len(), 0.5), 0)?;
    let p = WindowProblem::new(background, b, observations, tlm, 2)?;

    let x = StateVector::new(DVector::from_fn(layout.len(), |i, _| (i as f64).cos()), 0)?;
    let g = grad_j(&p, &x)?;
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..layout.len() {
        let mut plus = x.values().clone();
        let mut minus = x.values().clone();
        plus[i] += step;
        minus[i] -= step;
        let fd = (eval_j(&p, &StateVector::new(plus, 0)?)? - eval_j(&p, &StateVector::new(minus, 0)?)?) / (2.0 * step);
        worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
    }
    println!("J(x) = {:.6}", eval_j(&p, &x)?);
    println!("max relative gradient error over {} entries: {worst:.2e}", layout.len());
    Ok(())
}
