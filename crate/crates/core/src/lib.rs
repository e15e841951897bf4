//! Desk-scale four-dimensional variational (4D-Var) data assimilation.
//!
//! The engine minimises the 4D-Var cost of each assimilation window, chains
//! windows into a reanalysis, and ships a laboratory of ensemble experiments
//! that treat the analyses as realisations of spatial and temporal
//! stochastic processes.
//!
//! Modules, bottom-up:
//!
//! - [`grid`]: geometry and location-major state layout
//! - [`dynamics`]: nonlinear model, tangent-linear matrix, propagators
//! - [`obs_operator`]: interpolation operator `H`
//! - [`cost`]: cost, gradient, closed-form / CG solvers, gain operators
//! - [`assimilation`]: the cycle driver
//! - [`world`]: hidden truth, seeded substreams, observation sampling
//! - [`scenario`]: wiring a run configuration into a runnable experiment
//! - [`lab`]: ensemble moments, affinity, shift maps, error dissection
//! - [`config`], [`output`], [`commands`]: JSON config, CSV output, batch commands

// `!(x > 0.0)` guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assimilation;
pub mod commands;
pub mod config;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod lab;
pub mod obs_operator;
pub mod output;
pub mod scenario;
pub mod world;

pub use error::{Error, Result};
