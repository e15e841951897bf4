//! The reanalysis cycle: background chaining from the previous analysis and
//! one window solve per cycle.
//!
//! The inputs to cycle `k` are the previous analysis and the observations of
//! window `[kΔt, (k+1)Δt]`; nothing else crosses the cycle boundary.

use std::sync::Arc;

use crate::cost::{solve_closed_form, solve_iterative, AnalysisResult, Covariance, WindowObservation, WindowProblem};
use crate::dynamics::{steps_between, TangentLinearModel};
use crate::error::{domain, Error, Result};
use crate::grid::StateVector;

/// Largest state dimension solved in closed form; larger problems use CG.
pub const CLOSED_FORM_MAX_DIM: usize = 512;

#[derive(Debug, Clone)]
pub struct CycleConfig {
    steps_per_window: usize,
    n_cycles: usize,
    guess: StateVector,
}

impl CycleConfig {
    /// `window_length` (Δt) must be a whole number of model steps `dt` (δt).
    pub fn new(window_length: f64, dt: f64, n_cycles: usize, guess: StateVector) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(domain(format!("model step must be positive, got {dt}")));
        }
        let steps = steps_between(0.0, window_length, dt)?;
        Self::with_steps(steps, n_cycles, guess)
    }

    pub fn with_steps(steps_per_window: usize, n_cycles: usize, guess: StateVector) -> Result<Self> {
        if steps_per_window == 0 {
            return Err(domain("window must span at least one model step"));
        }
        if n_cycles == 0 {
            return Err(domain("at least one cycle is required"));
        }
        Ok(Self {
            steps_per_window,
            n_cycles,
            guess: guess.with_time_index(0),
        })
    }

    pub fn steps_per_window(&self) -> usize {
        self.steps_per_window
    }

    pub fn n_cycles(&self) -> usize {
        self.n_cycles
    }

    pub fn guess(&self) -> &StateVector {
        &self.guess
    }
}

/// Observations realised in one window.
#[derive(Debug, Clone)]
pub struct WindowObservations {
    pub window: usize,
    pub observations: Vec<WindowObservation>,
}

/// Analyses and the backgrounds that produced them, one per cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisSeries {
    pub analyses: Vec<AnalysisResult>,
    pub backgrounds: Vec<StateVector>,
}

impl AnalysisSeries {
    pub fn len(&self) -> usize {
        self.analyses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.analyses.is_empty()
    }
}

/// Background of cycle `k`: the guess for `k = 0`, otherwise the previous
/// analysis propagated across one window.
pub fn make_background(
    k: usize,
    previous: Option<&AnalysisResult>,
    guess: &StateVector,
    tlm: &TangentLinearModel,
    steps_per_window: usize,
) -> Result<StateVector> {
    if k == 0 {
        return Ok(guess.clone().with_time_index(0));
    }
    let prev = previous.ok_or_else(|| Error::State(format!("cycle {k} needs the analysis of cycle {}", k - 1)))?;
    if prev.x_a.len() != tlm.dim() {
        return Err(domain("previous analysis does not match the model dimension"));
    }
    StateVector::new(
        tlm.propagate(prev.x_a.values(), steps_per_window),
        prev.x_a.time_index() + steps_per_window as u64,
    )
}

/// Minimise one window's cost with the solver appropriate for its size.
pub fn solve_window(problem: &WindowProblem) -> Result<AnalysisResult> {
    let n = problem.dim();
    if n <= CLOSED_FORM_MAX_DIM {
        solve_closed_form(problem)
    } else {
        let scale = problem.rhs().norm().max(1.0);
        solve_iterative(problem, 1e-10 * scale, 10 * n)
    }
}

/// Run `n_cycles` consecutive windows.
pub fn run_reanalysis(
    cfg: &CycleConfig,
    b: Arc<Covariance>,
    tlm: Arc<TangentLinearModel>,
    windows: &[WindowObservations],
) -> Result<AnalysisSeries> {
    if windows.len() < cfg.n_cycles {
        return Err(domain(format!(
            "{} cycles requested but observations cover {} windows",
            cfg.n_cycles,
            windows.len()
        )));
    }
    let mut analyses: Vec<AnalysisResult> = Vec::with_capacity(cfg.n_cycles);
    let mut backgrounds = Vec::with_capacity(cfg.n_cycles);
    for (k, window) in windows.iter().take(cfg.n_cycles).enumerate() {
        let wrap = |e| Error::Cycle {
            cycle: k,
            source: Box::new(e),
        };
        let background = make_background(k, analyses.last(), &cfg.guess, &tlm, cfg.steps_per_window).map_err(wrap)?;
        let problem = WindowProblem::new(
            background.clone(),
            Arc::clone(&b),
            window.observations.clone(),
            Arc::clone(&tlm),
            cfg.steps_per_window,
        )
        .map_err(wrap)?;
        analyses.push(solve_window(&problem).map_err(wrap)?);
        backgrounds.push(background);
    }
    Ok(AnalysisSeries { analyses, backgrounds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::SolverKind;
    use crate::obs_operator::ObsOperator;
    use nalgebra::{dmatrix, DVector};

    fn scalar_window(window: usize, y: f64) -> WindowObservations {
        WindowObservations {
            window,
            observations: vec![WindowObservation {
                offset: 0,
                values: DVector::from_element(1, y),
                operator: Arc::new(ObsOperator::selection(1, &[0]).unwrap()),
                error: Arc::new(Covariance::observation_diagonal(1, 1.0).unwrap()),
            }],
        }
    }

    fn unit_b() -> Arc<Covariance> {
        Arc::new(Covariance::new(crate::cost::CovarianceRole::Background, dmatrix![1.0]).unwrap())
    }

    #[test]
    fn background_examples() {
        let tlm = TangentLinearModel::new(dmatrix![0.5], 1.0).unwrap();
        let zero = StateVector::zeros(1, 0);
        assert_eq!(make_background(0, None, &zero, &tlm, 2).unwrap(), zero);

        let prev = AnalysisResult {
            x_a: StateVector::from_slice(&[4.0], 0).unwrap(),
            j_at_min: 0.0,
            gradient_norm: 0.0,
            solver: SolverKind::ClosedForm,
            iterations: 0,
        };
        let bg = make_background(1, Some(&prev), &zero, &tlm, 2).unwrap();
        assert_eq!(bg.values()[0], 1.0);
        assert_eq!(bg.time_index(), 2);

        let ident = TangentLinearModel::identity(1, 1.0).unwrap();
        assert_eq!(make_background(1, Some(&prev), &zero, &ident, 3).unwrap().values(), prev.x_a.values());
        assert!(matches!(make_background(2, None, &zero, &tlm, 2), Err(Error::State(_))));
    }

    #[test]
    fn scalar_chain() {
        let cfg = CycleConfig::with_steps(1, 2, StateVector::zeros(1, 0)).unwrap();
        let tlm = Arc::new(TangentLinearModel::identity(1, 1.0).unwrap());
        let windows = [scalar_window(0, 2.0), scalar_window(1, 2.0)];
        let series = run_reanalysis(&cfg, unit_b(), tlm, &windows).unwrap();
        assert!((series.analyses[0].x_a.values()[0] - 1.0).abs() < 1e-15);
        assert!((series.backgrounds[1].values()[0] - 1.0).abs() < 1e-15);
        assert!((series.analyses[1].x_a.values()[0] - 1.5).abs() < 1e-15);
        assert_eq!(series.analyses[1].x_a.time_index(), 1);
    }

    #[test]
    fn single_cycle_is_one_solve() {
        let cfg = CycleConfig::with_steps(1, 1, StateVector::from_slice(&[0.3], 0).unwrap()).unwrap();
        let tlm = Arc::new(TangentLinearModel::identity(1, 1.0).unwrap());
        let windows = [scalar_window(0, -1.2)];
        let series = run_reanalysis(&cfg, unit_b(), Arc::clone(&tlm), &windows).unwrap();
        let problem = WindowProblem::new(cfg.guess().clone(), unit_b(), windows[0].observations.clone(), tlm, 1).unwrap();
        assert_eq!(series.analyses[0], solve_closed_form(&problem).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(CycleConfig::new(0.25, 0.1, 1, StateVector::zeros(1, 0)).is_err());
        assert_eq!(CycleConfig::new(0.3, 0.1, 1, StateVector::zeros(1, 0)).unwrap().steps_per_window(), 3);
        assert!(CycleConfig::with_steps(1, 0, StateVector::zeros(1, 0)).is_err());
        let cfg = CycleConfig::with_steps(1, 3, StateVector::zeros(1, 0)).unwrap();
        let tlm = Arc::new(TangentLinearModel::identity(1, 1.0).unwrap());
        assert!(run_reanalysis(&cfg, unit_b(), tlm, &[scalar_window(0, 1.0)]).is_err());
    }
}
