//! Ensemble experiments on the analysis viewed as a random object: its
//! moments, its affine dependence on the observations, the sample-path
//! structure of cycled and gridded analyses, and the decomposition of its
//! errors.

mod affine;
mod dissection;
mod ensemble;
mod shift;
pub mod stats;
mod variogram;

pub use affine::{verify_affine, AffineReport, AFFINE_TOLERANCE};
pub use dissection::{
    error_dissection, error_ledger, DiscrepancyPath, DissectionOptions, DissectionReport, ErrorComponent, ErrorLedger,
    LedgerEntry, PairCorrelation, Verdict, MIN_DISSECTION_MEMBERS, PAIRS,
};
pub use ensemble::{analytic_analysis_covariance, ensemble_analysis, Ensemble, EnsembleResult};
pub use shift::{
    neighborhood_shift_demo, ordered_shift_demo, shift, shift_map_demo, window_samples, LocationSample, NeighborCheck,
    NeighborhoodReport, ShiftCheck, ShiftReport, WindowSample, WindowSolver,
};
pub use stats::Moments;
pub use variogram::{empirical_variogram, VariogramBin};
