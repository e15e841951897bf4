//! The analysis as a random object: ensemble moments and their analytic
//! counterpart.

use nalgebra::DMatrix;

use super::stats::Moments;
use crate::cost::{gain_operators, WindowProblem};
use crate::error::{domain, Result};
use crate::scenario::{MemberRun, Scenario};

/// Per-cycle sample moments of `x_A` over ensemble members.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub members: usize,
    pub cycles: Vec<Moments>,
}

impl EnsembleResult {
    pub fn from_runs(runs: &[MemberRun]) -> Result<Self> {
        if runs.len() < 2 {
            return Err(domain("an ensemble needs at least two members"));
        }
        let n_cycles = runs[0].series.len();
        let cycles = (0..n_cycles)
            .map(|k| {
                let samples: Vec<_> = runs.iter().map(|r| r.series.analyses[k].x_a.values()).collect();
                Moments::from_samples(&samples)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            members: runs.len(),
            cycles,
        })
    }
}

/// Member runs together with their moments.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub runs: Vec<MemberRun>,
    pub result: EnsembleResult,
}

/// Run `members` seeded members of `scenario` and reduce them.
pub fn ensemble_analysis(scenario: &Scenario, members: usize) -> Result<Ensemble> {
    if members < 2 {
        return Err(domain("an ensemble needs at least two members"));
    }
    let runs = scenario.run_ensemble(members)?;
    let result = EnsembleResult::from_runs(&runs)?;
    Ok(Ensemble { runs, result })
}

/// `Σ_τ K_τ R_τ Kᵀ_τ`: covariance of the analysis when only the observations
/// are random, with true error covariances `r_true` (one per observation time).
pub fn analytic_analysis_covariance(p: &WindowProblem, r_true: &[DMatrix<f64>]) -> Result<DMatrix<f64>> {
    if r_true.len() != p.observations().len() {
        return Err(domain(format!(
            "{} observation times but {} error covariances",
            p.observations().len(),
            r_true.len()
        )));
    }
    let gains = gain_operators(p)?;
    let n = p.dim();
    let mut cov = DMatrix::zeros(n, n);
    for (k, r) in gains.k.iter().zip(r_true) {
        if r.nrows() != k.ncols() || r.ncols() != k.ncols() {
            return Err(domain("true error covariance does not match its observation block"));
        }
        cov += k * r * k.transpose();
    }
    Ok((&cov + cov.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;
    use crate::cost::{Covariance, CovarianceRole, WindowObservation};
    use crate::dynamics::TangentLinearModel;
    use crate::grid::StateVector;
    use crate::obs_operator::ObsOperator;
    use nalgebra::{dmatrix, DVector};
    use std::sync::Arc;

    fn scalar_config(sigma_r: f64) -> RunConfig {
        RunConfig::from_json(&format!(
            r#"{{
            "grid": {{"dim": 1, "n_cells": 2, "spacing": 1.0, "compositions": ["PM25"]}},
            "dynamics": {{"kind": "linear_advection_diffusion"}},
            "observations": {{"time_offsets": [0]}},
            "covariances": {{"sigma_b": 1.0, "sigma_r": 1.0}},
            "cycle": {{"window_length": 1.0, "n_cycles": 2}},
            "world": {{"initial_mean": 1.0, "sigma_r": {sigma_r}}},
            "master_seed": 4
        }}"#
        ))
        .unwrap()
    }

    #[test]
    fn degenerate_omega_gives_identical_members() {
        let s = Scenario::from_config(&scalar_config(0.0)).unwrap();
        let e = ensemble_analysis(&s, 5).unwrap();
        for m in &e.result.cycles {
            assert!(m.variance.iter().all(|&v| v == 0.0));
        }
        assert!(ensemble_analysis(&s, 1).is_err());
    }

    #[test]
    fn noisy_members_have_positive_variance() {
        let s = Scenario::from_config(&scalar_config(1.0)).unwrap();
        let e = ensemble_analysis(&s, 200).unwrap();
        for m in &e.result.cycles {
            assert!(m.variance.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn analytic_covariance_examples() {
        let b = Arc::new(Covariance::new(CovarianceRole::Background, dmatrix![1.0]).unwrap());
        let tlm = Arc::new(TangentLinearModel::identity(1, 1.0).unwrap());
        let obs = WindowObservation {
            offset: 0,
            values: DVector::from_element(1, 0.0),
            operator: Arc::new(ObsOperator::selection(1, &[0]).unwrap()),
            error: Arc::new(Covariance::observation_diagonal(1, 1.0).unwrap()),
        };
        let p = WindowProblem::new(StateVector::zeros(1, 0), b, vec![obs], tlm, 1).unwrap();
        let cov = analytic_analysis_covariance(&p, &[dmatrix![1.0]]).unwrap();
        assert!((cov[(0, 0)] - 0.25).abs() < 1e-15);
        assert_eq!(analytic_analysis_covariance(&p, &[dmatrix![0.0]]).unwrap()[(0, 0)], 0.0);
        assert!(analytic_analysis_covariance(&p, &[]).is_err());
    }
}
