//! JSON run configuration. Every block is validated before any computation
//! and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::CompositionSet;
use crate::lab::DiscrepancyPath;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub dynamics: DynamicsConfig,
    #[serde(default)]
    pub observations: ObservationsConfig,
    #[serde(default)]
    pub covariances: CovariancesConfig,
    pub cycle: CycleBlock,
    #[serde(default)]
    pub world: WorldConfig,
    #[serde(default)]
    pub lab: LabConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    /// Cells along each axis; a 2-D grid is square.
    pub n_cells: usize,
    pub spacing: f64,
    pub compositions: CompositionSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindConfig {
    LinearAdvectionDiffusion,
    QuadraticPerturbed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    pub kind: ModelKindConfig,
    #[serde(default)]
    pub advection: f64,
    #[serde(default)]
    pub diffusion: f64,
    #[serde(default)]
    pub quadratic_gain: f64,
    #[serde(default = "one")]
    pub dt: f64,
    /// Explicit linear part, row by row, replacing the stencil.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Centroid,
    UniformRandom,
    Fixed(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationsConfig {
    /// Sites per observation time; each site observes every composition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[serde(default = "default_placement")]
    pub placement: Placement,
    /// Step offsets inside the window; default is every step `0..=S`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_offsets: Option<Vec<usize>>,
}

impl Default for ObservationsConfig {
    fn default() -> Self {
        Self {
            count: None,
            placement: Placement::Centroid,
            time_offsets: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariancesConfig {
    #[serde(default = "one")]
    pub sigma_b: f64,
    /// Defaults to twice the grid spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_b: Option<f64>,
    #[serde(default = "half")]
    pub sigma_r: f64,
}

impl Default for CovariancesConfig {
    fn default() -> Self {
        Self {
            sigma_b: 1.0,
            length_b: None,
            sigma_r: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuessConfig {
    Zeros,
    Truth,
    PerturbedTruth(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleBlock {
    pub window_length: f64,
    pub n_cycles: usize,
    #[serde(default = "default_guess")]
    pub initial_guess: GuessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    /// Innovation standard deviation σ_w.
    #[serde(default)]
    pub sigma_w: f64,
    /// Innovation correlation length ℓ_s; defaults to twice the spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_s: Option<f64>,
    #[serde(default)]
    pub initial_mean: f64,
    #[serde(default)]
    pub initial_sigma: f64,
    /// Explicit initial truth; overrides mean and sigma.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<f64>>,
    /// True instrument noise; defaults to the assimilation's `sigma_r`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_r: Option<f64>,
    #[serde(default)]
    pub vary_truth_per_member: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            sigma_w: 0.0,
            length_s: None,
            initial_mean: 0.0,
            initial_sigma: 0.0,
            initial_state: None,
            sigma_r: None,
            vary_truth_per_member: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    #[serde(default = "default_members")]
    pub members: usize,
    /// Correlations within `significance_sigmas / √members` count as zero.
    #[serde(default = "three")]
    pub significance_sigmas: f64,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_trials")]
    pub verify_trials: usize,
    #[serde(default)]
    pub discrepancy_path: DiscrepancyPath,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            members: default_members(),
            significance_sigmas: 3.0,
            bootstrap_resamples: default_bootstrap(),
            verify_trials: default_trials(),
            discrepancy_path: DiscrepancyPath::Truth,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn three() -> f64 {
    3.0
}
fn default_placement() -> Placement {
    Placement::Centroid
}
fn default_guess() -> GuessConfig {
    GuessConfig::Zeros
}
fn default_members() -> usize {
    200
}
fn default_bootstrap() -> usize {
    200
}
fn default_trials() -> usize {
    5
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(config_err(format!("{name} must be non-negative and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Number of state entries `N·P`.
    pub fn state_dim(&self) -> usize {
        self.grid.n_cells.pow(self.grid.dim as u32) * self.grid.compositions.len()
    }

    /// Scalar checks that need no geometry; the rest happen when a
    /// scenario is assembled.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.dim != 1 && g.dim != 2 {
            return Err(config_err(format!("grid.dim must be 1 or 2, got {}", g.dim)));
        }
        if g.n_cells < 2 {
            return Err(config_err("grid.n_cells must be at least 2"));
        }
        positive("grid.spacing", g.spacing)?;

        let d = &self.dynamics;
        positive("dynamics.dt", d.dt)?;
        non_negative("dynamics.diffusion", d.diffusion)?;
        if !d.advection.is_finite() || !d.quadratic_gain.is_finite() {
            return Err(config_err("dynamics parameters must be finite"));
        }
        if d.kind == ModelKindConfig::LinearAdvectionDiffusion && d.quadratic_gain != 0.0 {
            return Err(config_err("quadratic_gain must be 0 for linear_advection_diffusion"));
        }
        if let Some(rows) = &d.matrix {
            let n = self.state_dim();
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(config_err(format!("dynamics.matrix must be {n}×{n}")));
            }
        }

        let o = &self.observations;
        if o.count == Some(0) {
            return Err(config_err("observations.count must be positive"));
        }
        if let Placement::Fixed(points) = &o.placement {
            if points.is_empty() {
                return Err(config_err("fixed placement needs at least one location"));
            }
            if let Some(c) = o.count {
                if c != points.len() {
                    return Err(config_err("observations.count disagrees with the fixed list"));
                }
            }
            if points.iter().any(|p| p.len() != g.dim) {
                return Err(config_err(format!("fixed locations must have {} coordinates", g.dim)));
            }
        }
        if o.placement == Placement::UniformRandom && o.count.is_none() {
            return Err(config_err("uniform_random placement needs observations.count"));
        }

        let c = &self.covariances;
        positive("covariances.sigma_b", c.sigma_b)?;
        positive("covariances.sigma_r", c.sigma_r)?;
        if let Some(l) = c.length_b {
            positive("covariances.length_b", l)?;
        }

        positive("cycle.window_length", self.cycle.window_length)?;
        if self.cycle.n_cycles == 0 {
            return Err(config_err("cycle.n_cycles must be at least 1"));
        }
        if let GuessConfig::PerturbedTruth(s) = self.cycle.initial_guess {
            non_negative("perturbed_truth sigma", s)?;
        }

        let w = &self.world;
        non_negative("world.sigma_w", w.sigma_w)?;
        non_negative("world.initial_sigma", w.initial_sigma)?;
        if !w.initial_mean.is_finite() {
            return Err(config_err("world.initial_mean must be finite"));
        }
        if let Some(l) = w.length_s {
            positive("world.length_s", l)?;
        }
        if let Some(s) = w.sigma_r {
            non_negative("world.sigma_r", s)?;
        }
        if let Some(x0) = &w.initial_state {
            if x0.len() != self.state_dim() {
                return Err(config_err(format!("world.initial_state must have {} entries", self.state_dim())));
            }
        }

        let l = &self.lab;
        if l.members == 0 {
            return Err(config_err("lab.members must be positive"));
        }
        positive("lab.significance_sigmas", l.significance_sigmas)?;
        if l.verify_trials < 3 {
            return Err(config_err("lab.verify_trials must be at least 3"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "grid": {"dim": 1, "n_cells": 16, "spacing": 1.0, "compositions": ["PM25", "BC"]},
        "dynamics": {"kind": "linear_advection_diffusion", "advection": 0.3, "diffusion": 0.1},
        "cycle": {"window_length": 2.0, "n_cycles": 3}
    }"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.covariances.sigma_b, 1.0);
        assert_eq!(cfg.covariances.sigma_r, 0.5);
        assert_eq!(cfg.cycle.initial_guess, GuessConfig::Zeros);
        assert_eq!(cfg.observations.placement, Placement::Centroid);
        assert_eq!(cfg.state_dim(), 32);
        let again = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MINIMAL.replace("\"n_cycles\": 3", "\"n_cycles\": 3, \"extra\": 1");
        assert!(matches!(RunConfig::from_json(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("\"grid\"", "\"gird\"");
        assert!(RunConfig::from_json(&bad).is_err());
    }

    #[test]
    fn tagged_variants_parse() {
        let text = MINIMAL.replace(
            "\"n_cycles\": 3",
            "\"n_cycles\": 3, \"initial_guess\": {\"perturbed_truth\": 0.2}",
        );
        let cfg = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg.cycle.initial_guess, GuessConfig::PerturbedTruth(0.2));
        let text = MINIMAL.replace(
            "\"cycle\"",
            "\"observations\": {\"placement\": {\"fixed\": [[0.5], [3.25]]}}, \"cycle\"",
        );
        let cfg = RunConfig::from_json(&text).unwrap();
        assert_eq!(cfg.observations.placement, Placement::Fixed(vec![vec![0.5], vec![3.25]]));
    }

    #[test]
    fn invalid_values_rejected() {
        for (from, to) in [
            ("\"dim\": 1", "\"dim\": 3"),
            ("\"n_cells\": 16", "\"n_cells\": 1"),
            ("\"spacing\": 1.0", "\"spacing\": -1.0"),
            ("\"n_cycles\": 3", "\"n_cycles\": 0"),
            ("\"diffusion\": 0.1", "\"diffusion\": 0.1, \"quadratic_gain\": 0.2"),
            ("[\"PM25\", \"BC\"]", "[\"PM25\", \"PM25\"]"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(RunConfig::from_json(&text).is_err(), "{to} accepted");
        }
    }
}
