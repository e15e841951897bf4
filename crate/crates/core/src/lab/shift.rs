//! Replay checks showing that a cycled analysis series is one sample path:
//! in time through the left shift on per-window sample elements, in space
//! through translations of per-location sample elements.

use std::sync::Arc;

use crate::assimilation::{make_background, solve_window, AnalysisSeries, WindowObservations};
use crate::cost::{Covariance, WindowProblem};
use crate::dynamics::TangentLinearModel;
use crate::error::{domain, Result};
use crate::grid::{GridGeometry, StateLayout, StateVector};

/// The realised inputs of one window: its background and observations.
#[derive(Debug, Clone)]
pub struct WindowSample {
    pub window: usize,
    pub background: StateVector,
    pub observations: WindowObservations,
}

/// Pair a stored series with the observations that produced it.
pub fn window_samples(series: &AnalysisSeries, windows: &[WindowObservations]) -> Result<Vec<WindowSample>> {
    if windows.len() < series.len() {
        return Err(domain("fewer stored windows than analyses"));
    }
    Ok(series
        .backgrounds
        .iter()
        .zip(windows)
        .enumerate()
        .map(|(k, (background, obs))| WindowSample {
            window: k,
            background: background.clone(),
            observations: obs.clone(),
        })
        .collect())
}

/// `T^k`: drop the first `k` elements of a sample-element sequence.
pub fn shift<T>(sequence: &[T], k: usize) -> &[T] {
    &sequence[k.min(sequence.len())..]
}

/// The window-solve map `G`: replays one stored sample element.
#[derive(Debug, Clone)]
pub struct WindowSolver {
    pub b: Arc<Covariance>,
    pub tlm: Arc<TangentLinearModel>,
    pub steps_per_window: usize,
}

impl WindowSolver {
    pub fn solve(&self, sample: &WindowSample) -> Result<StateVector> {
        let problem = WindowProblem::new(
            sample.background.clone(),
            Arc::clone(&self.b),
            sample.observations.observations.clone(),
            Arc::clone(&self.tlm),
            self.steps_per_window,
        )?;
        Ok(solve_window(&problem)?.x_a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShiftCheck {
    pub k: usize,
    /// `G(T^k ω)` equals the stored `x_A` of cycle `k` bitwise.
    pub analysis: bool,
    /// The stored background of cycle `k` equals `M^S x_A` of cycle `k − 1` bitwise.
    pub chain: bool,
}

impl ShiftCheck {
    pub fn passed(&self) -> bool {
        self.analysis && self.chain
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftReport {
    pub checks: Vec<ShiftCheck>,
}

impl ShiftReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(ShiftCheck::passed)
    }

    pub fn first_failure(&self) -> Option<usize> {
        self.checks.iter().find(|c| !c.passed()).map(|c| c.k)
    }
}

/// Verify `G(T^k ω_0) == x_A(kΔt)` for every stored cycle.
pub fn shift_map_demo(
    solver: &WindowSolver,
    guess: &StateVector,
    series: &AnalysisSeries,
    omega: &[WindowSample],
) -> Result<ShiftReport> {
    if omega.len() < series.len() {
        return Err(domain("sample-element sequence is shorter than the series"));
    }
    let mut checks = Vec::with_capacity(series.len());
    for (k, stored) in series.analyses.iter().enumerate() {
        let head = &shift(omega, k)[0];
        let replayed = solver.solve(head)?;
        let previous = k.checked_sub(1).map(|j| &series.analyses[j]);
        let chained = make_background(k, previous, guess, &solver.tlm, solver.steps_per_window)?;
        checks.push(ShiftCheck {
            k,
            analysis: bitwise_equal(&replayed, &stored.x_a),
            chain: bitwise_equal(&chained, &head.background),
        });
    }
    Ok(ShiftReport { checks })
}

fn bitwise_equal(a: &StateVector, b: &StateVector) -> bool {
    a.len() == b.len() && a.values().iter().zip(b.values().iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Sample element attached to one grid location.
#[derive(Debug, Clone, Copy)]
pub struct LocationSample<'a> {
    pub location: usize,
    pub sample: &'a WindowSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborCheck {
    /// Position in the sequence being read.
    pub position: usize,
    /// Location whose stored analysis it must reproduce.
    pub neighbor: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodReport {
    pub checks: Vec<NeighborCheck>,
}

impl NeighborhoodReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn first_failure(&self) -> Option<(usize, usize)> {
        self.checks.iter().find(|c| !c.pass).map(|c| (c.position, c.neighbor))
    }
}

/// Spatial `G`: solve the element's window and read the block at its location.
fn read_block(
    layout: &StateLayout,
    solved: &mut Vec<(usize, StateVector)>,
    solver: &WindowSolver,
    element: &LocationSample,
) -> Result<Vec<f64>> {
    let key = element.sample.window;
    if !solved.iter().any(|(w, _)| *w == key) {
        solved.push((key, solver.solve(element.sample)?));
    }
    let x = &solved.iter().find(|(w, _)| *w == key).expect("just solved").1;
    Ok(x.block(layout, element.location).to_vec())
}

fn block_bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Ordered locations `s_0, s_1, …`: `G(T^{Δs} ω)_j == x_A(s_{j+1})` for every
/// `j` with a successor. A single location has nothing to check.
pub fn ordered_shift_demo(
    layout: &StateLayout,
    solver: &WindowSolver,
    sequence: &[LocationSample],
    analysis: &StateVector,
) -> Result<NeighborhoodReport> {
    let shifted = shift(sequence, 1);
    let mut solved = Vec::new();
    let mut checks = Vec::with_capacity(shifted.len());
    for (j, element) in shifted.iter().enumerate() {
        let replayed = read_block(layout, &mut solved, solver, element)?;
        let target = sequence[j + 1].location;
        checks.push(NeighborCheck {
            position: j,
            neighbor: target,
            pass: block_bits(&replayed) == block_bits(analysis.block(layout, target)),
        });
    }
    Ok(NeighborhoodReport { checks })
}

/// Shift equalities for the analysis of one window at fixed time.
///
/// On a line the locations are ordered and the left shift applies. On a
/// square grid each first-order neighbour pair `(s, s′)` is checked through
/// the periodic translation by `s′ − s`, which places `ω_{s′}` at position `s`.
pub fn neighborhood_shift_demo(
    grid: &GridGeometry,
    layout: &StateLayout,
    solver: &WindowSolver,
    sample: &WindowSample,
    analysis: &StateVector,
) -> Result<NeighborhoodReport> {
    if layout.n_cells() != grid.n_cells() || analysis.len() != layout.len() {
        return Err(domain("grid, layout and analysis disagree"));
    }
    let sequence: Vec<LocationSample> = (0..grid.n_cells())
        .map(|location| LocationSample { location, sample })
        .collect();
    if grid.dim() == 1 {
        return ordered_shift_demo(layout, solver, &sequence, analysis);
    }
    let mut solved = Vec::new();
    let mut checks = Vec::new();
    for s in 0..grid.n_cells() {
        let (sx, sy) = grid.cell_coords(s);
        for neighbor in grid.neighbors(s) {
            let (nx, ny) = grid.cell_coords(neighbor);
            let (dx, dy) = (nx as isize - sx as isize, ny as isize - sy as isize);
            let translated: Vec<LocationSample> = (0..grid.n_cells())
                .map(|pos| sequence[grid.translate(pos, dx, dy)])
                .collect();
            let replayed = read_block(layout, &mut solved, solver, &translated[s])?;
            checks.push(NeighborCheck {
                position: s,
                neighbor,
                pass: block_bits(&replayed) == block_bits(analysis.block(layout, neighbor)),
            });
        }
    }
    Ok(NeighborhoodReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::scenario::Scenario;

    fn scenario(dim: usize, n: usize, cycles: usize) -> Scenario {
        Scenario::from_config(
            &RunConfig::from_json(&format!(
                r#"{{
                "grid": {{"dim": {dim}, "n_cells": {n}, "spacing": 1.0, "compositions": ["PM25", "BC"]}},
                "dynamics": {{"kind": "linear_advection_diffusion", "advection": 0.5, "diffusion": 0.1}},
                "observations": {{"placement": "uniform_random", "count": 4}},
                "cycle": {{"window_length": 2.0, "n_cycles": {cycles}}},
                "world": {{"initial_mean": 2.0, "initial_sigma": 1.0, "sigma_w": 0.2}},
                "master_seed": 17
            }}"#
            ))
            .unwrap(),
        )
        .unwrap()
    }

    fn solver(s: &Scenario) -> WindowSolver {
        WindowSolver {
            b: Arc::clone(&s.b),
            tlm: Arc::clone(&s.tlm),
            steps_per_window: s.steps_per_window,
        }
    }

    #[test]
    fn shift_map_replays_every_cycle() {
        let s = scenario(1, 6, 5);
        let run = s.run_member(0).unwrap();
        let omega = window_samples(&run.series, &run.windows).unwrap();
        let guess = s.cycle_config(&run.truth, 0).unwrap().guess().clone();
        let report = shift_map_demo(&solver(&s), &guess, &run.series, &omega).unwrap();
        assert_eq!(report.checks.len(), 5);
        assert!(report.passed());

        let mut tampered = run.series.clone();
        tampered.analyses[3].x_a = StateVector::new(tampered.analyses[3].x_a.values().add_scalar(1e-12), 6).unwrap();
        let report = shift_map_demo(&solver(&s), &guess, &tampered, &omega).unwrap();
        assert_eq!(report.first_failure(), Some(3));
    }

    #[test]
    fn ordered_shift_counts() {
        let s = scenario(1, 3, 1);
        let run = s.run_member(0).unwrap();
        let omega = window_samples(&run.series, &run.windows).unwrap();
        let x = &run.series.analyses[0].x_a;
        let report = neighborhood_shift_demo(&s.grid, &s.layout, &solver(&s), &omega[0], x).unwrap();
        assert_eq!(report.checks.len(), 2);
        assert!(report.passed());

        let single = [LocationSample {
            location: 1,
            sample: &omega[0],
        }];
        let report = ordered_shift_demo(&s.layout, &solver(&s), &single, x).unwrap();
        assert!(report.checks.is_empty() && report.passed());
    }

    #[test]
    fn square_grid_neighbor_pairs() {
        let s = scenario(2, 3, 1);
        let run = s.run_member(0).unwrap();
        let omega = window_samples(&run.series, &run.windows).unwrap();
        let x = &run.series.analyses[0].x_a;
        let report = neighborhood_shift_demo(&s.grid, &s.layout, &solver(&s), &omega[0], x).unwrap();
        let centre = s.grid.cell_at(1, 1);
        assert_eq!(report.checks.iter().filter(|c| c.position == centre).count(), 4);
        assert_eq!(report.checks.len(), 24);
        assert!(report.passed());
    }
}
