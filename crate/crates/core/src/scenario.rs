//! A run configuration turned into concrete operators, plus the per-member
//! experiment: simulate truth, observe it, assimilate.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;

use crate::assimilation::{run_reanalysis, AnalysisSeries, CycleConfig, WindowObservations};
use crate::config::{GuessConfig, ModelKindConfig, Placement, RunConfig};
use crate::cost::{Covariance, WindowProblem};
use crate::dynamics::{steps_between, tangent_linear_at_zero, NonlinearModel, TangentLinearModel};
use crate::error::{Error, Result};
use crate::grid::{CompositionSet, GridGeometry, StateLayout, StateVector};
use crate::obs_operator::{ObsOperator, ObservationGeometry, ObservationSite, ObservationTime};
use crate::world::{
    resolve_guess, sample_observations, GuessSpec, HiddenProcess, InitialTruth, NoiseSpec, ObservationSet, SeedPlan,
    SpatialNoise, StreamPurpose, TruthTrajectory, SHARED_MEMBER,
};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: RunConfig,
    pub grid: GridGeometry,
    pub compositions: CompositionSet,
    pub layout: StateLayout,
    /// The true model `m`.
    pub truth_model: NonlinearModel,
    /// The assimilation system's `M`, linearised from `m` at zero.
    pub tlm: Arc<TangentLinearModel>,
    pub b: Arc<Covariance>,
    pub geometry: ObservationGeometry,
    pub operators: Vec<Arc<ObsOperator>>,
    /// `R` assumed by the cost function, one per observation time.
    pub r_assumed: Vec<Arc<Covariance>>,
    pub noise: NoiseSpec,
    pub process: HiddenProcess,
    pub steps_per_window: usize,
    pub n_cycles: usize,
    pub guess: GuessSpec,
    pub seeds: SeedPlan,
    pub vary_truth: bool,
}

/// Everything one ensemble member produced.
#[derive(Debug, Clone)]
pub struct MemberRun {
    pub member: u64,
    pub truth: Arc<TruthTrajectory>,
    pub observations: Vec<ObservationSet>,
    pub windows: Vec<WindowObservations>,
    pub series: AnalysisSeries,
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Domain(msg) | Error::Numeric(msg) => Error::Config(msg),
        other => other,
    }
}

impl Scenario {
    pub fn from_config(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        Self::assemble(config).map_err(config_err)
    }

    fn assemble(config: &RunConfig) -> Result<Self> {
        let g = &config.grid;
        let grid = GridGeometry::new(g.dim, g.n_cells, g.spacing)?;
        let compositions = g.compositions.clone();
        let layout = StateLayout::for_grid(&grid, &compositions);
        let d = &config.dynamics;

        let truth_model = match (&d.matrix, d.kind) {
            (Some(rows), kind) => {
                let n = layout.len();
                let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
                match kind {
                    ModelKindConfig::LinearAdvectionDiffusion => NonlinearModel::linear_from_matrix(a, d.dt)?,
                    ModelKindConfig::QuadraticPerturbed => {
                        NonlinearModel::quadratic_from_matrix(a, d.quadratic_gain, d.dt)?
                    }
                }
            }
            (None, ModelKindConfig::LinearAdvectionDiffusion) => {
                NonlinearModel::advection_diffusion(&grid, &layout, d.advection, d.diffusion, d.dt)?
            }
            (None, ModelKindConfig::QuadraticPerturbed) => NonlinearModel::quadratic_perturbed(
                &grid,
                &layout,
                d.advection,
                d.diffusion,
                d.quadratic_gain,
                d.dt,
            )?,
        };
        let tlm = Arc::new(tangent_linear_at_zero(&truth_model));
        let steps_per_window = steps_between(0.0, config.cycle.window_length, d.dt)?;
        if steps_per_window == 0 {
            return Err(Error::Config("window must span at least one model step".into()));
        }

        let c = &config.covariances;
        let b = Arc::new(Covariance::background_exponential(
            &grid,
            &layout,
            c.sigma_b,
            c.length_b.unwrap_or(2.0 * g.spacing),
        )?);

        let seeds = SeedPlan::new(config.master_seed);
        let locations = site_locations(config, &grid, &seeds)?;
        let sites: Vec<ObservationSite> = locations
            .iter()
            .flat_map(|loc| (0..layout.n_compositions()).map(move |comp| ObservationSite::new(loc.clone(), comp)))
            .collect();
        let offsets = config
            .observations
            .time_offsets
            .clone()
            .unwrap_or_else(|| (0..=steps_per_window).collect());
        let times = offsets
            .into_iter()
            .map(|offset| ObservationTime {
                offset,
                sites: sites.clone(),
            })
            .collect();
        let geometry = ObservationGeometry::new(&grid, &layout, steps_per_window, times)?;
        let operators: Vec<Arc<ObsOperator>> = geometry
            .operators(&grid, &layout)?
            .into_iter()
            .map(Arc::new)
            .collect();
        let r = Arc::new(Covariance::observation_diagonal(sites.len(), c.sigma_r)?);
        let r_assumed = vec![r; operators.len()];

        let w = &config.world;
        let noise = NoiseSpec::new(w.sigma_r.unwrap_or(c.sigma_r))?;
        let length_s = w.length_s.unwrap_or(2.0 * g.spacing);
        let initial = match &w.initial_state {
            Some(x0) => InitialTruth::Fixed(StateVector::from_slice(x0, 0)?),
            None => InitialTruth::Random {
                mean: w.initial_mean,
                field: SpatialNoise::new(&grid, &layout, w.initial_sigma, length_s)?,
            },
        };
        let process = HiddenProcess {
            model: truth_model.clone(),
            innovation: SpatialNoise::new(&grid, &layout, w.sigma_w, length_s)?,
            initial,
        };
        let guess = match config.cycle.initial_guess {
            GuessConfig::Zeros => GuessSpec::Zeros,
            GuessConfig::Truth => GuessSpec::Truth,
            GuessConfig::PerturbedTruth(s) => GuessSpec::PerturbedTruth(s),
        };

        Ok(Self {
            config: config.clone(),
            grid,
            compositions,
            layout,
            truth_model,
            tlm,
            b,
            geometry,
            operators,
            r_assumed,
            noise,
            process,
            steps_per_window,
            n_cycles: config.cycle.n_cycles,
            guess,
            seeds,
            vary_truth: w.vary_truth_per_member,
        })
    }

    /// Model steps covered by all cycles.
    pub fn total_steps(&self) -> usize {
        self.steps_per_window * self.n_cycles
    }

    fn truth_member(&self, member: u64) -> u64 {
        if self.vary_truth {
            member
        } else {
            SHARED_MEMBER
        }
    }

    pub fn simulate_truth(&self, member: u64) -> Result<TruthTrajectory> {
        self.process
            .simulate_truth(&self.seeds, self.truth_member(member), self.total_steps())
    }

    pub fn observe(&self, truth: &TruthTrajectory, member: u64) -> Result<Vec<ObservationSet>> {
        (0..self.n_cycles)
            .map(|k| {
                sample_observations(
                    truth,
                    &self.geometry,
                    &self.operators,
                    &self.noise,
                    &self.seeds,
                    member,
                    k,
                    self.steps_per_window,
                )
            })
            .collect()
    }

    pub fn cycle_config(&self, truth: &TruthTrajectory, member: u64) -> Result<CycleConfig> {
        let guess = resolve_guess(self.guess, truth.at(0)?, &self.seeds, member);
        CycleConfig::with_steps(self.steps_per_window, self.n_cycles, guess)
    }

    pub fn window_problem(&self, background: StateVector, window: &WindowObservations) -> Result<WindowProblem> {
        WindowProblem::new(
            background,
            Arc::clone(&self.b),
            window.observations.clone(),
            Arc::clone(&self.tlm),
            self.steps_per_window,
        )
    }

    /// Simulate, observe and assimilate one member.
    pub fn run_member(&self, member: u64) -> Result<MemberRun> {
        let truth = Arc::new(self.simulate_truth(member)?);
        self.run_member_with_truth(member, truth)
    }

    fn run_member_with_truth(&self, member: u64, truth: Arc<TruthTrajectory>) -> Result<MemberRun> {
        let observations = self.observe(&truth, member)?;
        let windows: Vec<WindowObservations> = observations
            .iter()
            .map(|set| set.to_window(&self.operators, &self.r_assumed))
            .collect();
        let cfg = self.cycle_config(&truth, member)?;
        let series = run_reanalysis(&cfg, Arc::clone(&self.b), Arc::clone(&self.tlm), &windows)?;
        Ok(MemberRun {
            member,
            truth,
            observations,
            windows,
            series,
        })
    }

    /// Members `0..members` in parallel, returned in member order. A truth
    /// shared by all members is simulated once.
    pub fn run_ensemble(&self, members: usize) -> Result<Vec<MemberRun>> {
        let shared = if self.vary_truth {
            None
        } else {
            Some(Arc::new(self.simulate_truth(0)?))
        };
        (0..members as u64)
            .into_par_iter()
            .map(|m| match &shared {
                Some(truth) => self.run_member_with_truth(m, Arc::clone(truth)),
                None => self.run_member(m),
            })
            .collect()
    }
}

/// Observation site coordinates, identical in every window.
fn site_locations(config: &RunConfig, grid: &GridGeometry, seeds: &SeedPlan) -> Result<Vec<Vec<f64>>> {
    let o = &config.observations;
    match &o.placement {
        Placement::Fixed(points) => Ok(points.clone()),
        Placement::Centroid => {
            let n = grid.n_cells();
            let count = o.count.unwrap_or(n);
            if count > n {
                return Err(Error::Config(format!(
                    "centroid placement supports at most {n} sites, got {count}"
                )));
            }
            Ok((0..count).map(|i| grid.centroid(i * n / count)).collect())
        }
        Placement::UniformRandom => {
            let count = o.count.unwrap_or(grid.n_cells());
            let hi = (grid.side() - 1) as f64 * grid.spacing();
            let mut rng = seeds.stream(SHARED_MEMBER, 0, StreamPurpose::Placement);
            Ok((0..count)
                .map(|_| (0..grid.dim()).map(|_| rng.random_range(0.0..=hi)).collect())
                .collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra_world: &str) -> RunConfig {
        RunConfig::from_json(&format!(
            r#"{{
            "grid": {{"dim": 1, "n_cells": 6, "spacing": 1.0, "compositions": ["PM25", "BC"]}},
            "dynamics": {{"kind": "linear_advection_diffusion", "advection": 0.4, "diffusion": 0.2, "dt": 0.5}},
            "observations": {{"count": 3}},
            "cycle": {{"window_length": 1.0, "n_cycles": 4, "initial_guess": "truth"}},
            "world": {{"initial_mean": 1.0, "initial_sigma": 0.5 {extra_world}}},
            "master_seed": 9
        }}"#
        ))
        .unwrap()
    }

    #[test]
    fn assembles_operators() {
        let s = Scenario::from_config(&config("")).unwrap();
        assert_eq!(s.steps_per_window, 2);
        assert_eq!(s.operators.len(), 3);
        assert_eq!(s.operators[0].n_obs(), 6);
        assert_eq!(s.operators[0].n_state(), 12);
        assert_eq!(s.tlm.matrix(), s.truth_model.linear_part());
        assert_eq!(s.total_steps(), 8);
    }

    #[test]
    fn perfect_setup_recovers_truth() {
        let s = Scenario::from_config(&config(", \"sigma_r\": 0.0")).unwrap();
        let run = s.run_member(0).unwrap();
        for (k, a) in run.series.analyses.iter().enumerate() {
            let truth = run.truth.at(k * s.steps_per_window).unwrap();
            assert!((a.x_a.values() - truth.values()).amax() <= 1e-9, "cycle {k}");
            assert_eq!(a.x_a.time_index(), (k * s.steps_per_window) as u64);
        }
    }

    #[test]
    fn ensemble_matches_single_runs() {
        let s = Scenario::from_config(&config(", \"sigma_w\": 0.3, \"vary_truth_per_member\": true")).unwrap();
        let runs = s.run_ensemble(4).unwrap();
        for (m, run) in runs.iter().enumerate() {
            let single = s.run_member(m as u64).unwrap();
            assert_eq!(run.series, single.series);
        }
        assert_ne!(runs[0].truth.states[1], runs[1].truth.states[1]);
    }

    #[test]
    fn bad_geometry_is_config_error() {
        let mut cfg = config("");
        cfg.observations.count = Some(10);
        assert!(matches!(Scenario::from_config(&cfg), Err(Error::Config(_))));
        let mut cfg = config("");
        cfg.cycle.window_length = 0.75;
        assert!(matches!(Scenario::from_config(&cfg), Err(Error::Config(_))));
    }
}
