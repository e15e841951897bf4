//! Batch subcommands behind the `fourdvar` binary.
//!
//! Exit codes: 0 pass, 1 property failure, 2 config or I/O error, 3 numeric
//! failure.

use std::fs;
use std::path::PathBuf;

use nalgebra::DMatrix;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::lab::{
    analytic_analysis_covariance, empirical_variogram, ensemble_analysis, error_dissection, neighborhood_shift_demo,
    shift_map_demo, verify_affine, window_samples, DissectionOptions, Verdict, WindowSolver,
};
use crate::output::{OutputDir, VerifyRow};
use crate::scenario::Scenario;
use crate::world::{GuessSpec, StreamPurpose, SHARED_MEMBER};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Affine,
    Shift,
    Neighborhood,
    Errors,
    Covariance,
    All,
}

impl Suite {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "affine" => Suite::Affine,
            "shift" => Suite::Shift,
            "neighborhood" => Suite::Neighborhood,
            "errors" => Suite::Errors,
            "covariance" => Suite::Covariance,
            "all" => Suite::All,
            other => return Err(Error::Config(format!("unknown suite {other:?}"))),
        })
    }

    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Truth,
    Observe,
    Assimilate,
    Ensemble,
    Verify(Suite),
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Truth => "truth",
            Command::Observe => "observe",
            Command::Assimilate => "assimilate",
            Command::Ensemble => "ensemble",
            Command::Verify(_) => "verify",
            Command::Report => "report",
        }
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub members: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    pub lines: Vec<String>,
}

impl Outcome {
    fn pass(lines: Vec<String>) -> Self {
        Self { passed: true, lines }
    }
}

/// Map a command result to the process exit code.
pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if o.passed => EXIT_PASS,
        Ok(_) => EXIT_PROPERTY,
        Err(Error::Config(_) | Error::Io(_) | Error::Json(_)) => EXIT_CONFIG,
        Err(_) => EXIT_NUMERIC,
    }
}

pub fn apply_overrides(mut config: RunConfig, overrides: &Overrides) -> Result<RunConfig> {
    if let Some(seed) = overrides.seed {
        config.master_seed = seed;
    }
    if let Some(members) = overrides.members {
        config.lab.members = members;
    }
    if let Some(out) = &overrides.out {
        config.output_dir = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

/// Run `command` on the config at `config_path`.
pub fn run(command: Command, config_path: &std::path::Path, overrides: &Overrides) -> Result<Outcome> {
    let config = apply_overrides(RunConfig::load(config_path)?, overrides)?;
    run_config(command, &config)
}

pub fn run_config(command: Command, config: &RunConfig) -> Result<Outcome> {
    let out = OutputDir::create(config.output_dir.clone().unwrap_or_else(|| PathBuf::from("out")))?;
    if command == Command::Report {
        return report(&out);
    }
    let scenario = Scenario::from_config(config)?;
    out.write_meta(config, command.name())?;
    match command {
        Command::Truth => truth(&scenario, &out),
        Command::Observe => observe(&scenario, &out),
        Command::Assimilate => assimilate(&scenario, &out),
        Command::Ensemble => ensemble(&scenario, &out),
        Command::Verify(suite) => verify(&scenario, &out, suite),
        Command::Report => unreachable!("handled above"),
    }
}

fn truth(s: &Scenario, out: &OutputDir) -> Result<Outcome> {
    let truth = s.simulate_truth(0)?;
    out.write_truth(&truth, &s.layout, &s.compositions, s.truth_model.dt())?;
    out.write_summary("truth", json!({"steps": truth.steps(), "states": truth.states.len()}))?;
    Ok(Outcome::pass(vec![format!("truth: {} steps", truth.steps())]))
}

fn observe(s: &Scenario, out: &OutputDir) -> Result<Outcome> {
    let truth = s.simulate_truth(0)?;
    let sets = s.observe(&truth, 0)?;
    out.write_observations(&sets, &s.geometry, &s.compositions, s.truth_model.dt())?;
    let count: usize = sets.iter().map(|set| set.all_errors().len()).sum();
    out.write_summary("observe", json!({"windows": sets.len(), "observations": count}))?;
    Ok(Outcome::pass(vec![format!("observe: {count} observations in {} windows", sets.len())]))
}

fn assimilate(s: &Scenario, out: &OutputDir) -> Result<Outcome> {
    let run = s.run_member(0)?;
    out.write_series(&run.series, &s.layout, &s.compositions)?;
    let errors: Vec<f64> = run
        .series
        .analyses
        .iter()
        .enumerate()
        .map(|(k, a)| Ok((a.x_a.values() - run.truth.at(k * s.steps_per_window)?.values()).amax()))
        .collect::<Result<_>>()?;
    let max_abs = errors.iter().copied().fold(0.0, f64::max);
    out.write_summary(
        "assimilate",
        json!({
            "cycles": run.series.len(),
            "solver": run.series.analyses[0].solver.name(),
            "max_abs_error_vs_truth": max_abs,
            "abs_error_vs_truth_by_cycle": errors,
        }),
    )?;
    Ok(Outcome::pass(vec![format!(
        "assimilate: {} cycles, max |x_A - truth| = {max_abs:e}",
        run.series.len()
    )]))
}

fn ensemble(s: &Scenario, out: &OutputDir) -> Result<Outcome> {
    let e = ensemble_analysis(s, s.config.lab.members)?;
    out.write_moments(&e.result, &s.layout, &s.compositions)?;
    let max_lag = s.grid.side().saturating_sub(1);
    let mut bins = Vec::new();
    for k in 0..s.n_cycles {
        let fields: Vec<_> = e.runs.iter().map(|r| &r.series.analyses[k].x_a).collect();
        for (c, name) in s.compositions.names().iter().enumerate() {
            for bin in empirical_variogram(&s.grid, &s.layout, c, &fields, max_lag) {
                bins.push((k, name.clone(), bin));
            }
        }
    }
    out.write_variogram(&bins)?;
    let min_var = e
        .result
        .cycles
        .iter()
        .flat_map(|m| m.variance.iter().copied())
        .fold(f64::INFINITY, f64::min);
    out.write_summary("ensemble", json!({"members": e.result.members, "min_variance": min_var}))?;
    Ok(Outcome::pass(vec![format!(
        "ensemble: {} members, smallest analysis variance {min_var:e}",
        e.result.members
    )]))
}

fn solver(s: &Scenario) -> WindowSolver {
    WindowSolver {
        b: std::sync::Arc::clone(&s.b),
        tlm: std::sync::Arc::clone(&s.tlm),
        steps_per_window: s.steps_per_window,
    }
}

fn verify(s: &Scenario, out: &OutputDir, suite: Suite) -> Result<Outcome> {
    let mut rows: Vec<VerifyRow> = Vec::new();
    let needs_single = [Suite::Affine, Suite::Shift, Suite::Neighborhood]
        .iter()
        .any(|&x| suite.includes(x));
    let single = if needs_single { Some(s.run_member(0)?) } else { None };

    if suite.includes(Suite::Affine) {
        let run = single.as_ref().expect("single run");
        let problem = s.window_problem(run.series.backgrounds[0].clone(), &run.windows[0])?;
        let mut rng = s.seeds.stream(SHARED_MEMBER, 0, StreamPurpose::Probe);
        let r = verify_affine(&problem, s.config.lab.verify_trials, &mut rng)?;
        for (check, v) in [
            ("superposition", r.superposition),
            ("offset", r.offset),
            ("gain", r.gain),
            ("scaling", r.scaling),
        ] {
            rows.push(VerifyRow::new("affine", check, Some(v), Some(r.tolerance), v <= r.tolerance));
        }
    }

    if suite.includes(Suite::Shift) {
        let run = single.as_ref().expect("single run");
        let omega = window_samples(&run.series, &run.windows)?;
        let guess = s.cycle_config(&run.truth, 0)?.guess().clone();
        let report = shift_map_demo(&solver(s), &guess, &run.series, &omega)?;
        out.write_shiftcheck(&report)?;
        for c in &report.checks {
            rows.push(VerifyRow::new("shift", format!("k={}", c.k), None, None, c.passed()));
        }
    }

    if suite.includes(Suite::Neighborhood) {
        let run = single.as_ref().expect("single run");
        let omega = window_samples(&run.series, &run.windows)?;
        for (k, sample) in omega.iter().enumerate() {
            let x = &run.series.analyses[k].x_a;
            let report = neighborhood_shift_demo(&s.grid, &s.layout, &solver(s), sample, x)?;
            let failures = report.checks.iter().filter(|c| !c.pass).count();
            rows.push(VerifyRow::new(
                "neighborhood",
                format!("k={k} checks={}", report.checks.len()),
                Some(failures as f64),
                Some(0.0),
                report.passed(),
            ));
        }
    }

    let needs_ensemble = suite.includes(Suite::Errors) || suite.includes(Suite::Covariance);
    let ens = if needs_ensemble {
        Some(ensemble_analysis(s, s.config.lab.members)?)
    } else {
        None
    };

    if suite.includes(Suite::Covariance) {
        let e = ens.as_ref().expect("ensemble");
        if s.vary_truth || matches!(s.guess, GuessSpec::PerturbedTruth(_)) {
            return Err(Error::Config(
                "covariance suite needs a shared truth and an unperturbed first guess".into(),
            ));
        }
        let run = &e.runs[0];
        let problem = s.window_problem(run.series.backgrounds[0].clone(), &run.windows[0])?;
        let r_true: Vec<DMatrix<f64>> = run.windows[0]
            .observations
            .iter()
            .map(|o| s.noise.covariance(o.values.len()))
            .collect();
        let analytic = analytic_analysis_covariance(&problem, &r_true)?;
        let (worst, pass) = covariance_agreement(&analytic, &e.result.cycles[0].covariance, e.result.members)?;
        rows.push(VerifyRow::new("covariance", "cycle0 max |emp-ana|/(5 sigma/sqrt(members))", Some(worst), Some(1.0), pass));
    }

    if suite.includes(Suite::Errors) {
        let e = ens.as_ref().expect("ensemble");
        let lab = &s.config.lab;
        let report = error_dissection(
            s,
            &e.runs,
            DissectionOptions {
                significance_sigmas: lab.significance_sigmas,
                bootstrap_resamples: lab.bootstrap_resamples,
                path: lab.discrepancy_path,
            },
        )?;
        out.write_dissection(&report, &s.compositions)?;
        for (check, v) in [
            ("cycle0_independent", report.first_cycle_independent),
            ("input_discrepancy_dependent", report.input_discrepancy_dependent),
            ("observation_independent", report.observation_independent),
        ] {
            rows.push(VerifyRow::new("errors", check, None, Some(report.threshold), v == Verdict::Pass));
        }
        let in_range = report
            .grid_wise
            .iter()
            .chain(&report.composition_wise)
            .flat_map(|m| m.iter())
            .all(|v| v.is_nan() || (-1.0..=1.0).contains(v));
        rows.push(VerifyRow::new("errors", "correlation_matrices_in_range", None, None, in_range));
    }

    out.write_verify(&rows)?;
    let passed = rows.iter().all(|r| r.pass);
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{}:{}", r.suite, r.check))
        .collect();
    out.write_summary("verify", json!({"checks": rows.len(), "passed": passed, "failed": failed}))?;
    let lines = rows
        .iter()
        .map(|r| format!("{} {} {}", if r.pass { "PASS" } else { "FAIL" }, r.suite, r.check))
        .collect();
    Ok(Outcome { passed, lines })
}

/// Entrywise agreement of a sample covariance with its analytic value,
/// scaled by `5 σ_ij / √members` with `σ_ij² = Σ_ii Σ_jj + Σ_ij²` (Gaussian).
/// Returns the worst scaled deviation and whether it is at most 1.
pub fn covariance_agreement(
    analytic: &DMatrix<f64>,
    sample: &Option<DMatrix<f64>>,
    members: usize,
) -> Result<(f64, bool)> {
    let sample = sample
        .as_ref()
        .ok_or_else(|| Error::Config("state too large for the covariance suite".into()))?;
    let n = analytic.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let sd = (analytic[(i, i)] * analytic[(j, j)] + analytic[(i, j)].powi(2)).sqrt();
            let band = 5.0 * sd / (members as f64).sqrt() + 1e-12;
            worst = worst.max((sample[(i, j)] - analytic[(i, j)]).abs() / band);
        }
    }
    Ok((worst, worst <= 1.0))
}

/// Summarise previous outputs in the directory; fails if `verify.csv` has failures.
fn report(out: &OutputDir) -> Result<Outcome> {
    let summary = fs::read_to_string(out.path("summary.json"))
        .map_err(|e| Error::Config(format!("no summary.json in {}: {e}", out.root().display())))?;
    let summary: serde_json::Value = serde_json::from_str(&summary)?;
    let mut lines = vec![format!("outputs in {}", out.root().display())];
    if let Some(map) = summary.as_object() {
        for (command, entry) in map {
            lines.push(format!("{command}: {entry}"));
        }
    }
    let mut passed = true;
    if let Ok(mut reader) = csv::Reader::from_path(out.path("verify.csv")) {
        for record in reader.records() {
            let record = record.map_err(|e| Error::Config(format!("verify.csv: {e}")))?;
            let ok = record.get(4) == Some("true");
            passed &= ok;
            lines.push(format!(
                "{} {} {}",
                if ok { "PASS" } else { "FAIL" },
                record.get(0).unwrap_or(""),
                record.get(1).unwrap_or("")
            ));
        }
    }
    let text = lines.join("\n") + "\n";
    fs::write(out.path("report.txt"), &text)?;
    Ok(Outcome { passed, lines })
}
