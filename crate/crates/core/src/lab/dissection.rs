//! Per-cycle error decomposition of the analysis into model-input error,
//! model discrepancy and observation error, and the ensemble correlations
//! between them.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::stats::{bootstrap_interval, correlation, Moments};
use crate::error::{Error, Result};
use crate::scenario::{MemberRun, Scenario};
use crate::world::{StreamPurpose, SHARED_MEMBER};

/// Dissection needs at least this many members.
pub const MIN_DISSECTION_MEMBERS: usize = 200;

/// Trajectory along which the defect `m(x) − M x` is accumulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscrepancyPath {
    /// `x_j = M^j x_A(k)`, the assimilation system's forecast from its analysis.
    Analysis,
    /// The hidden truth over the window. Unlike the analysis path it does
    /// not depend on the window's observations.
    #[default]
    Truth,
}

/// Errors of one cycle of one member.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerEntry {
    /// `x_B(k) − truth(kΔt)`.
    pub input_error: DVector<f64>,
    /// `Σ_{j<S} [m(x_j) − M x_j]` along the chosen path.
    pub model_discrepancy: DVector<f64>,
    /// `y − H truth` for every observation of the window.
    pub obs_error: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorLedger {
    pub cycles: Vec<LedgerEntry>,
}

pub fn error_ledger(scenario: &Scenario, run: &MemberRun, path: DiscrepancyPath) -> Result<ErrorLedger> {
    let s = scenario.steps_per_window;
    let model = &scenario.truth_model;
    let tlm = &scenario.tlm;
    let mut cycles = Vec::with_capacity(run.series.len());
    for (k, (analysis, background)) in run.series.analyses.iter().zip(&run.series.backgrounds).enumerate() {
        let start = k * s;
        let input_error = background.values() - run.truth.at(start)?.values();
        let mut discrepancy = DVector::zeros(input_error.len());
        for j in 0..s {
            let x = match path {
                DiscrepancyPath::Analysis => tlm.propagate(analysis.x_a.values(), j),
                DiscrepancyPath::Truth => run.truth.at(start + j)?.values().clone(),
            };
            discrepancy += model.apply(&x) - tlm.matrix() * &x;
        }
        let entry = LedgerEntry {
            input_error,
            model_discrepancy: discrepancy,
            obs_error: run.observations[k].all_errors(),
        };
        let finite = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        if !(finite(&entry.input_error) && finite(&entry.model_discrepancy) && finite(&entry.obs_error)) {
            return Err(Error::Numeric(format!("non-finite error ledger entry at cycle {k}")));
        }
        cycles.push(entry);
    }
    Ok(ErrorLedger { cycles })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorComponent {
    Input,
    Discrepancy,
    Observation,
}

impl ErrorComponent {
    pub fn name(self) -> &'static str {
        match self {
            ErrorComponent::Input => "input_error",
            ErrorComponent::Discrepancy => "model_discrepancy",
            ErrorComponent::Observation => "obs_error",
        }
    }

    fn of(self, entry: &LedgerEntry) -> &DVector<f64> {
        match self {
            ErrorComponent::Input => &entry.input_error,
            ErrorComponent::Discrepancy => &entry.model_discrepancy,
            ErrorComponent::Observation => &entry.obs_error,
        }
    }
}

pub const PAIRS: [(ErrorComponent, ErrorComponent); 3] = [
    (ErrorComponent::Input, ErrorComponent::Discrepancy),
    (ErrorComponent::Input, ErrorComponent::Observation),
    (ErrorComponent::Discrepancy, ErrorComponent::Observation),
];

/// Ensemble correlation of two components' norms at one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCorrelation {
    pub k: usize,
    pub pair: (ErrorComponent, ErrorComponent),
    /// `None` when a component has no spread across members.
    pub rho: Option<f64>,
    pub ci: Option<(f64, f64)>,
}

impl PairCorrelation {
    pub fn label(&self) -> String {
        format!("{}~{}", self.pair.0.name(), self.pair.1.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// A needed correlation is undefined.
    Undefined,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Undefined => "undefined",
        }
    }

    fn all(items: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Pass;
        for v in items {
            match v {
                Verdict::Fail => return Verdict::Fail,
                Verdict::Undefined => out = Verdict::Undefined,
                Verdict::Pass => {}
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissectionReport {
    pub members: usize,
    /// `significance_sigmas / √members`.
    pub threshold: f64,
    pub correlations: Vec<PairCorrelation>,
    /// Per-member ledgers, in member order.
    pub ledgers: Vec<ErrorLedger>,
    /// Cycle 0: all three pairs indistinguishable from zero.
    pub first_cycle_independent: Verdict,
    /// Cycles `k ≥ 1`: input error and discrepancy significantly correlated.
    pub input_discrepancy_dependent: Verdict,
    /// Cycles `k ≥ 1`: both pairings with observation error indistinguishable from zero.
    pub observation_independent: Verdict,
    /// Final-cycle analysis-error correlation between locations, one `N × N`
    /// matrix per composition.
    pub grid_wise: Vec<DMatrix<f64>>,
    /// Final-cycle analysis-error correlation between compositions, one
    /// `P × P` matrix per location.
    pub composition_wise: Vec<DMatrix<f64>>,
}

impl DissectionReport {
    pub fn correlation(&self, k: usize, pair: (ErrorComponent, ErrorComponent)) -> Option<&PairCorrelation> {
        self.correlations.iter().find(|c| c.k == k && c.pair == pair)
    }

    pub fn passed(&self) -> bool {
        [
            self.first_cycle_independent,
            self.input_discrepancy_dependent,
            self.observation_independent,
        ]
        .iter()
        .all(|v| *v == Verdict::Pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissectionOptions {
    pub significance_sigmas: f64,
    pub bootstrap_resamples: usize,
    pub path: DiscrepancyPath,
}

fn norms(ledgers: &[ErrorLedger], k: usize, component: ErrorComponent) -> Vec<f64> {
    ledgers.iter().map(|l| component.of(&l.cycles[k]).norm()).collect()
}

/// Dissect the errors of an ensemble of runs of `scenario`.
pub fn error_dissection(scenario: &Scenario, runs: &[MemberRun], options: DissectionOptions) -> Result<DissectionReport> {
    let members = runs.len();
    if members < MIN_DISSECTION_MEMBERS {
        return Err(Error::Config(format!(
            "error dissection needs at least {MIN_DISSECTION_MEMBERS} members, got {members}"
        )));
    }
    let ledgers: Vec<ErrorLedger> = runs
        .iter()
        .map(|run| error_ledger(scenario, run, options.path))
        .collect::<Result<_>>()?;
    let threshold = options.significance_sigmas / (members as f64).sqrt();
    let n_cycles = ledgers[0].cycles.len();

    let mut correlations = Vec::with_capacity(n_cycles * PAIRS.len());
    for k in 0..n_cycles {
        for (i, &(a, b)) in PAIRS.iter().enumerate() {
            let (xa, xb) = (norms(&ledgers, k, a), norms(&ledgers, k, b));
            let rho = correlation(&xa, &xb);
            let ci = rho.and_then(|_| {
                let mut rng = scenario
                    .seeds
                    .stream(SHARED_MEMBER, (k * PAIRS.len() + i) as u64, StreamPurpose::Bootstrap);
                bootstrap_interval(&xa, &xb, options.bootstrap_resamples, 0.95, &mut rng)
            });
            correlations.push(PairCorrelation {
                k,
                pair: (a, b),
                rho,
                ci,
            });
        }
    }

    let small = |c: &PairCorrelation| match c.rho {
        None => Verdict::Undefined,
        Some(r) if r.abs() <= threshold => Verdict::Pass,
        Some(_) => Verdict::Fail,
    };
    let large = |c: &PairCorrelation| match c.rho {
        None => Verdict::Undefined,
        Some(r) if r.abs() > threshold => Verdict::Pass,
        Some(_) => Verdict::Fail,
    };
    let first_cycle_independent = Verdict::all(correlations.iter().filter(|c| c.k == 0).map(small));
    let later = || correlations.iter().filter(|c| c.k >= 1);
    let input_discrepancy_dependent = if n_cycles < 2 {
        Verdict::Undefined
    } else {
        Verdict::all(later().filter(|c| c.pair == PAIRS[0]).map(large))
    };
    let observation_independent = if n_cycles < 2 {
        Verdict::Undefined
    } else {
        Verdict::all(later().filter(|c| c.pair != PAIRS[0]).map(small))
    };

    let (grid_wise, composition_wise) = analysis_error_correlations(scenario, runs)?;
    Ok(DissectionReport {
        members,
        threshold,
        correlations,
        ledgers,
        first_cycle_independent,
        input_discrepancy_dependent,
        observation_independent,
        grid_wise,
        composition_wise,
    })
}

/// Grid-wise and composition-wise correlation matrices.
type CorrelationSets = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

fn analysis_error_correlations(scenario: &Scenario, runs: &[MemberRun]) -> Result<CorrelationSets> {
    let layout = scenario.layout;
    let (n, p) = (layout.n_cells(), layout.n_compositions());
    let k = scenario.n_cycles - 1;
    let errors: Vec<DVector<f64>> = runs
        .iter()
        .map(|r| Ok(r.series.analyses[k].x_a.values() - r.truth.at(k * scenario.steps_per_window)?.values()))
        .collect::<Result<_>>()?;
    let select = |indices: &[usize]| -> Result<DMatrix<f64>> {
        let picked: Vec<DVector<f64>> = errors
            .iter()
            .map(|e| DVector::from_iterator(indices.len(), indices.iter().map(|&i| e[i])))
            .collect();
        let refs: Vec<&DVector<f64>> = picked.iter().collect();
        Ok(Moments::from_samples(&refs)?
            .correlation()
            .unwrap_or_else(|| correlation_matrix(&picked)))
    };
    let grid_wise = (0..p)
        .map(|c| select(&(0..n).map(|l| l * p + c).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    let composition_wise = (0..n)
        .map(|l| select(&(0..p).map(|c| l * p + c).collect::<Vec<_>>()))
        .collect::<Result<_>>()?;
    Ok((grid_wise, composition_wise))
}

/// Correlation matrix for dimensions beyond the moment module's covariance cap.
fn correlation_matrix(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let n = samples[0].len();
    let columns: Vec<Vec<f64>> = (0..n).map(|i| samples.iter().map(|s| s[i]).collect()).collect();
    DMatrix::from_fn(n, n, |i, j| correlation(&columns[i], &columns[j]).unwrap_or(f64::NAN))
}
