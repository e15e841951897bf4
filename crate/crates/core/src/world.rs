//! Synthetic ground truth and seeded observation sampling.
//!
//! The hidden truth evolves under the true model `m` plus spatially
//! correlated Gaussian innovations; observations are the interpolated truth
//! plus independent Gaussian measurement error. Every random draw comes from
//! a substream addressed by `(member, index, purpose)`, so ensemble members
//! can be generated in any order or in parallel with identical results.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::assimilation::WindowObservations;
use crate::cost::{exponential_correlation, Covariance, WindowObservation};
use crate::dynamics::NonlinearModel;
use crate::error::{domain, Error, Result};
use crate::grid::{GridGeometry, StateLayout, StateVector};
use crate::obs_operator::{ObsOperator, ObservationGeometry};

/// Name of the generator behind every substream, recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), key = master seed | member | purpose, stream = index";

/// Member id for draws shared by the whole ensemble.
pub const SHARED_MEMBER: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum StreamPurpose {
    TruthInitial = 1,
    TruthInnovation = 2,
    ObservationNoise = 3,
    GuessPerturbation = 4,
    Placement = 5,
    Bootstrap = 6,
    Probe = 7,
}

/// Maps `(member, index, purpose)` triples to independent ChaCha8 streams.
///
/// The master seed, member and purpose form the 256-bit key and the index
/// selects the 64-bit stream, so distinct triples never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    master_seed: u64,
}

impl SeedPlan {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream(&self, member: u64, index: u64, purpose: StreamPurpose) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&member.to_le_bytes());
        key[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}

pub(crate) fn standard_normals(rng: &mut impl Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Zero-mean Gaussian field with covariance `σ² exp(−d/ℓ)` per composition,
/// independent across compositions.
#[derive(Debug, Clone)]
pub struct SpatialNoise {
    factor: Option<DMatrix<f64>>,
    n_compositions: usize,
    n_cells: usize,
}

impl SpatialNoise {
    pub fn new(grid: &GridGeometry, layout: &StateLayout, sigma: f64, length: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(domain(format!("noise sigma must be non-negative, got {sigma}")));
        }
        if !(length > 0.0) {
            return Err(domain(format!("correlation length must be positive, got {length}")));
        }
        let factor = if sigma == 0.0 {
            None
        } else {
            let corr = exponential_correlation(grid, length) * (sigma * sigma);
            let chol = Cholesky::new(corr).ok_or_else(|| Error::Numeric("spatial covariance is not SPD".into()))?;
            Some(chol.l())
        };
        Ok(Self {
            factor,
            n_compositions: layout.n_compositions(),
            n_cells: layout.n_cells(),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.factor.is_none()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> DVector<f64> {
        let p = self.n_compositions;
        let mut out = DVector::zeros(self.n_cells * p);
        if let Some(factor) = &self.factor {
            for c in 0..p {
                let field = factor * standard_normals(rng, self.n_cells);
                for (l, v) in field.iter().enumerate() {
                    out[l * p + c] = *v;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum InitialTruth {
    Fixed(StateVector),
    /// Constant mean plus a shared spatial Gaussian field.
    Random { mean: f64, field: SpatialNoise },
}

/// The true state sequence, one entry per model step from step 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrajectory {
    pub states: Vec<StateVector>,
}

impl TruthTrajectory {
    pub fn at(&self, step: usize) -> Result<&StateVector> {
        self.states
            .get(step)
            .ok_or_else(|| domain(format!("truth trajectory has no step {step}")))
    }

    pub fn steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Truth dynamics: `x_{j+1} = m(x_j) + w_j`.
#[derive(Debug, Clone)]
pub struct HiddenProcess {
    pub model: NonlinearModel,
    pub innovation: SpatialNoise,
    pub initial: InitialTruth,
}

impl HiddenProcess {
    /// Simulate `steps` steps. Innovations come from `member`'s substreams;
    /// pass [`SHARED_MEMBER`] for a truth common to the whole ensemble.
    pub fn simulate_truth(&self, seeds: &SeedPlan, member: u64, steps: usize) -> Result<TruthTrajectory> {
        if steps == 0 {
            return Err(domain("truth simulation needs at least one step"));
        }
        let x0 = match &self.initial {
            InitialTruth::Fixed(x) => x.values().clone(),
            InitialTruth::Random { mean, field } => {
                let mut rng = seeds.stream(SHARED_MEMBER, 0, StreamPurpose::TruthInitial);
                field.sample(&mut rng).add_scalar(*mean)
            }
        };
        if x0.len() != self.model.dim() {
            return Err(domain("initial truth does not match the model dimension"));
        }
        let mut states = Vec::with_capacity(steps + 1);
        states.push(StateVector::new(x0, 0)?);
        for step in 1..=steps {
            let prev = states[step - 1].values();
            let mut next = self.model.apply(prev);
            if !self.innovation.is_zero() {
                let mut rng = seeds.stream(member, step as u64, StreamPurpose::TruthInnovation);
                next += self.innovation.sample(&mut rng);
            }
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Overflow { step });
            }
            states.push(StateVector::new(next, step as u64)?);
        }
        Ok(TruthTrajectory { states })
    }
}

/// Diagonal measurement-error covariance `σ_R² I` of the real instruments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma_r: f64,
}

impl NoiseSpec {
    pub fn new(sigma_r: f64) -> Result<Self> {
        if !(sigma_r >= 0.0 && sigma_r.is_finite()) {
            return Err(domain(format!("observation noise sigma must be non-negative, got {sigma_r}")));
        }
        Ok(Self { sigma_r })
    }

    pub fn covariance(&self, m: usize) -> DMatrix<f64> {
        DMatrix::from_diagonal_element(m, m, self.sigma_r * self.sigma_r)
    }
}

/// Observations realised at one time inside a window.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedTime {
    pub offset: usize,
    pub step: usize,
    pub values: DVector<f64>,
    /// `y − H x_true`.
    pub errors: DVector<f64>,
}

/// All observations of one window: the window's sample element.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    pub window: usize,
    pub times: Vec<ObservedTime>,
}

impl ObservationSet {
    /// Pair values with the assimilation system's operators and error model.
    pub fn to_window(&self, operators: &[Arc<ObsOperator>], errors: &[Arc<Covariance>]) -> WindowObservations {
        WindowObservations {
            window: self.window,
            observations: self
                .times
                .iter()
                .zip(operators.iter().zip(errors))
                .map(|(t, (h, r))| WindowObservation {
                    offset: t.offset,
                    values: t.values.clone(),
                    operator: Arc::clone(h),
                    error: Arc::clone(r),
                })
                .collect(),
        }
    }

    pub fn all_errors(&self) -> DVector<f64> {
        let total = self.times.iter().map(|t| t.errors.len()).sum();
        DVector::from_iterator(total, self.times.iter().flat_map(|t| t.errors.iter().copied()))
    }
}

/// Draw `y = H x_true + ε` for window `window`.
///
/// Noise is keyed by the absolute model step, so an observation time shared
/// by two adjacent windows carries the same realised value in both.
#[allow(clippy::too_many_arguments)]
pub fn sample_observations(
    truth: &TruthTrajectory,
    geometry: &ObservationGeometry,
    operators: &[Arc<ObsOperator>],
    noise: &NoiseSpec,
    seeds: &SeedPlan,
    member: u64,
    window: usize,
    steps_per_window: usize,
) -> Result<ObservationSet> {
    if operators.len() != geometry.times().len() {
        return Err(domain("one operator per observation time is required"));
    }
    let start = window * steps_per_window;
    let mut times = Vec::with_capacity(operators.len());
    for (t, h) in geometry.times().iter().zip(operators) {
        let step = start + t.offset;
        let state = truth.states.get(step).ok_or_else(|| {
            domain(format!(
                "window {window} needs truth at step {step}, trajectory ends at {}",
                truth.steps()
            ))
        })?;
        let clean = h.apply(state.values());
        let errors = if noise.sigma_r == 0.0 {
            DVector::zeros(clean.len())
        } else {
            let mut rng = seeds.stream(member, step as u64, StreamPurpose::ObservationNoise);
            standard_normals(&mut rng, clean.len()) * noise.sigma_r
        };
        times.push(ObservedTime {
            offset: t.offset,
            step,
            values: clean + &errors,
            errors,
        });
    }
    Ok(ObservationSet { window, times })
}

/// How the first background is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GuessSpec {
    Zeros,
    Truth,
    /// Truth plus independent `N(0, σ²)` per entry.
    PerturbedTruth(f64),
}

pub fn resolve_guess(spec: GuessSpec, truth0: &StateVector, seeds: &SeedPlan, member: u64) -> StateVector {
    match spec {
        GuessSpec::Zeros => StateVector::zeros(truth0.len(), 0),
        GuessSpec::Truth => truth0.clone().with_time_index(0),
        GuessSpec::PerturbedTruth(sigma) => {
            let mut rng = seeds.stream(member, 0, StreamPurpose::GuessPerturbation);
            let v = truth0.values() + standard_normals(&mut rng, truth0.len()) * sigma;
            StateVector::new(v, 0).expect("finite perturbation of a finite state")
        }
    }
}
