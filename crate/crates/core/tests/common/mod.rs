#![allow(dead_code)]

use std::sync::Arc;

use fourdvar::config::RunConfig;
use fourdvar::cost::{Covariance, CovarianceRole, WindowObservation, WindowProblem};
use fourdvar::dynamics::{tangent_linear_at_zero, NonlinearModel, TangentLinearModel};
use fourdvar::grid::{CompositionSet, GridGeometry, StateLayout, StateVector};
use fourdvar::obs_operator::{build_h, ObsOperator, ObservationSite};
use nalgebra::{dmatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn normal_vector(n: usize, scale: f64, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)))
}

/// A random window problem on a line or square grid with `n ≤ 32`.
pub fn random_problem(seed: u64) -> WindowProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let square = rng.random_bool(0.3);
    let spacing = rng.random_range(0.5..2.0);
    let grid = if square {
        GridGeometry::square(rng.random_range(2..=3), spacing).unwrap()
    } else {
        GridGeometry::line(rng.random_range(2..=8), spacing).unwrap()
    };
    let max_p = (32 / grid.n_cells()).min(4);
    let p = rng.random_range(1..=max_p);
    let names: Vec<String> = (0..p).map(|c| format!("c{c}")).collect();
    let layout = StateLayout::for_grid(&grid, &CompositionSet::new(names).unwrap());

    // Courant numbers kept inside the explicit scheme's stability region.
    let advection = rng.random_range(0.0..0.5) * spacing;
    let diffusion = rng.random_range(0.0..0.1) * spacing * spacing;
    let model = NonlinearModel::advection_diffusion(&grid, &layout, advection, diffusion, 1.0).unwrap();
    let tlm = Arc::new(tangent_linear_at_zero(&model));
    let b = Arc::new(
        Covariance::background_exponential(&grid, &layout, rng.random_range(0.3..2.0), rng.random_range(0.5..3.0) * spacing)
            .unwrap(),
    );

    let steps = rng.random_range(1..=3);
    let hi = (grid.side() - 1) as f64 * spacing;
    let mut observations = Vec::new();
    for offset in 0..=steps {
        if offset > 0 && rng.random_bool(0.4) {
            continue;
        }
        let count = rng.random_range(1..=6);
        let sites: Vec<ObservationSite> = (0..count)
            .map(|_| {
                let loc = (0..grid.dim()).map(|_| rng.random_range(0.0..=hi)).collect();
                ObservationSite::new(loc, rng.random_range(0..p))
            })
            .collect();
        let h = Arc::new(build_h(&grid, &layout, &sites).unwrap());
        let r = Arc::new(Covariance::observation_diagonal(count, rng.random_range(0.2..1.5)).unwrap());
        observations.push(WindowObservation {
            offset,
            values: normal_vector(count, 2.0, &mut rng),
            operator: h,
            error: r,
        });
    }
    let background = StateVector::new(normal_vector(layout.len(), 1.0, &mut rng), 0).unwrap();
    WindowProblem::new(background, b, observations, tlm, steps).unwrap()
}

/// A scalar window problem: `B = b`, `M = m`, `H = 1`, one observation
/// `(offset, r, y)` per entry.
pub fn scalar_problem(b: f64, m: f64, background: f64, obs: &[(usize, f64, f64)], steps: usize) -> WindowProblem {
    let b = Arc::new(Covariance::new(CovarianceRole::Background, dmatrix![b]).unwrap());
    let tlm = Arc::new(TangentLinearModel::new(dmatrix![m], 1.0).unwrap());
    let observations = obs
        .iter()
        .map(|&(offset, r, y)| WindowObservation {
            offset,
            values: DVector::from_element(1, y),
            operator: Arc::new(ObsOperator::selection(1, &[0]).unwrap()),
            error: Arc::new(Covariance::new(CovarianceRole::Observation, dmatrix![r]).unwrap()),
        })
        .collect();
    WindowProblem::new(StateVector::from_slice(&[background], 0).unwrap(), b, observations, tlm, steps).unwrap()
}

pub fn config(text: &str) -> RunConfig {
    RunConfig::from_json(text).unwrap()
}

pub fn line_config() -> RunConfig {
    config(include_str!("../../../../configs/line.json"))
}

pub fn square_config() -> RunConfig {
    config(include_str!("../../../../configs/square.json"))
}

pub fn dissection_config() -> RunConfig {
    config(include_str!("../../../../configs/dissection.json"))
}
