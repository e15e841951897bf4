//! CSV and JSON artefacts. Every CSV starts with a header row; floats are
//! written in shortest round-trip form so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::assimilation::AnalysisSeries;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::grid::{CompositionSet, StateLayout, StateVector};
use crate::lab::{DissectionReport, EnsembleResult, ShiftReport, VariogramBin};
use crate::obs_operator::ObservationGeometry;
use crate::world::{ObservationSet, TruthTrajectory, RNG_ALGORITHM};

/// Output directory plus the naming of its files.
#[derive(Debug, Clone)]
pub struct OutputDir {
    root: PathBuf,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), num)
}

fn coords(p: &[f64]) -> String {
    p.iter().map(|c| num(*c)).collect::<Vec<_>>().join(";")
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn table(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<PathBuf> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_truth(&self, truth: &TruthTrajectory, layout: &StateLayout, names: &CompositionSet, dt: f64) -> Result<PathBuf> {
        let rows = truth.states.iter().enumerate().flat_map(|(step, x)| {
            state_rows(x, layout, names)
                .map(move |(loc, comp, v)| vec![num(step as f64 * dt), loc.to_string(), comp, num(v)])
        });
        self.table("truth.csv", &["time", "location", "composition", "value"], rows)
    }

    pub fn write_observations(
        &self,
        sets: &[ObservationSet],
        geometry: &ObservationGeometry,
        names: &CompositionSet,
        dt: f64,
    ) -> Result<PathBuf> {
        let mut rows = Vec::new();
        for set in sets {
            for (time, sites) in set.times.iter().zip(geometry.times()) {
                for (i, site) in sites.sites.iter().enumerate() {
                    rows.push(vec![
                        set.window.to_string(),
                        num(time.step as f64 * dt),
                        i.to_string(),
                        coords(&site.location),
                        names.names()[site.composition].clone(),
                        num(time.values[i]),
                    ]);
                }
            }
        }
        self.table(
            "observations.csv",
            &["window", "t_tilde", "obs_index", "location", "composition", "y"],
            rows,
        )
    }

    /// One row per `(k, location, composition)` of a per-cycle state list.
    pub fn write_states<'a>(
        &self,
        name: &str,
        value_column: &str,
        states: impl IntoIterator<Item = &'a StateVector>,
        layout: &StateLayout,
        names: &CompositionSet,
    ) -> Result<PathBuf> {
        let rows = states.into_iter().enumerate().flat_map(|(k, x)| {
            state_rows(x, layout, names).map(move |(loc, comp, v)| vec![k.to_string(), loc.to_string(), comp, num(v)])
        });
        self.table(name, &["k", "location", "composition", value_column], rows)
    }

    pub fn write_series(&self, series: &AnalysisSeries, layout: &StateLayout, names: &CompositionSet) -> Result<()> {
        self.write_states("analyses.csv", "x_A", series.analyses.iter().map(|a| &a.x_a), layout, names)?;
        self.write_states("backgrounds.csv", "x_B", series.backgrounds.iter(), layout, names)?;
        let rows = series
            .analyses
            .iter()
            .enumerate()
            .map(|(k, a)| vec![k.to_string(), num(a.j_at_min), num(a.gradient_norm)]);
        self.table("J_trace.csv", &["k", "J_at_min", "grad_norm"], rows)?;
        Ok(())
    }

    pub fn write_moments(&self, result: &EnsembleResult, layout: &StateLayout, names: &CompositionSet) -> Result<PathBuf> {
        let mut rows = Vec::new();
        for (k, m) in result.cycles.iter().enumerate() {
            for i in 0..m.mean.len() {
                let (loc, comp) = layout.split_index(i)?;
                rows.push(vec![
                    k.to_string(),
                    loc.to_string(),
                    names.names()[comp].clone(),
                    result.members.to_string(),
                    num(m.mean[i]),
                    num(m.variance[i]),
                ]);
            }
        }
        self.table(
            "moments.csv",
            &["k", "location", "composition", "members", "mean", "variance"],
            rows,
        )
    }

    pub fn write_variogram(&self, bins: &[(usize, String, VariogramBin)]) -> Result<PathBuf> {
        let rows = bins
            .iter()
            .map(|(k, comp, b)| vec![k.to_string(), comp.clone(), b.lag.to_string(), b.pairs.to_string(), num(b.gamma)]);
        self.table("variogram.csv", &["k", "composition", "lag", "pairs", "gamma"], rows)
    }

    pub fn write_shiftcheck(&self, report: &ShiftReport) -> Result<PathBuf> {
        let rows = report
            .checks
            .iter()
            .map(|c| vec![c.k.to_string(), c.passed().to_string()]);
        self.table("shiftcheck.csv", &["k", "pass"], rows)
    }

    pub fn write_dissection(&self, report: &DissectionReport, names: &CompositionSet) -> Result<()> {
        let rows = report.correlations.iter().map(|c| {
            vec![
                c.label(),
                c.k.to_string(),
                opt_num(c.rho),
                opt_num(c.ci.map(|ci| ci.0)),
                opt_num(c.ci.map(|ci| ci.1)),
            ]
        });
        self.table("correlations.csv", &["pair", "k", "rho", "ci_low", "ci_high"], rows)?;

        let mut rows = Vec::new();
        for (member, ledger) in report.ledgers.iter().enumerate() {
            for (k, e) in ledger.cycles.iter().enumerate() {
                for (component, v) in [
                    ("input_error", &e.input_error),
                    ("model_discrepancy", &e.model_discrepancy),
                    ("obs_error", &e.obs_error),
                ] {
                    rows.push(vec![member.to_string(), k.to_string(), component.to_string(), num(v.norm())]);
                }
            }
        }
        self.table("ledger.csv", &["member", "k", "component", "norm"], rows)?;

        let mut rows = Vec::new();
        let labelled = report
            .grid_wise
            .iter()
            .enumerate()
            .map(|(c, m)| ("grid", names.names()[c].clone(), m))
            .chain(
                report
                    .composition_wise
                    .iter()
                    .enumerate()
                    .map(|(l, m)| ("composition", l.to_string(), m)),
            );
        for (kind, index, m) in labelled {
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    let v = m[(r, c)];
                    rows.push(vec![
                        kind.to_string(),
                        index.clone(),
                        r.to_string(),
                        c.to_string(),
                        opt_num((!v.is_nan()).then_some(v)),
                    ]);
                }
            }
        }
        self.table("error_correlations.csv", &["kind", "index", "row", "col", "rho"], rows)?;
        Ok(())
    }

    pub fn write_verify(&self, rows: &[VerifyRow]) -> Result<PathBuf> {
        let rows = rows.iter().map(|r| {
            vec![
                r.suite.clone(),
                r.check.clone(),
                opt_num(r.value),
                opt_num(r.threshold),
                r.pass.to_string(),
            ]
        });
        self.table("verify.csv", &["suite", "check", "value", "threshold", "pass"], rows)
    }

    pub fn write_meta(&self, config: &RunConfig, command: &str) -> Result<PathBuf> {
        let meta = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "master_seed": config.master_seed,
            "rng_algorithm": RNG_ALGORITHM,
            "config_sha256": config_hash(config),
            "config": serde_json::to_value(config)?,
        });
        let path = self.path("meta.json");
        fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(path)
    }

    /// Merge `entry` under `command` into `summary.json`.
    pub fn write_summary(&self, command: &str, entry: Value) -> Result<PathBuf> {
        let path = self.path("summary.json");
        let mut all: Map<String, Value> = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_default(),
            Err(_) => Map::new(),
        };
        all.insert(command.to_string(), entry);
        fs::write(&path, serde_json::to_string_pretty(&Value::Object(all))? + "\n")?;
        Ok(path)
    }
}

/// One property verdict for `verify.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub suite: String,
    pub check: String,
    pub value: Option<f64>,
    pub threshold: Option<f64>,
    pub pass: bool,
}

impl VerifyRow {
    pub fn new(suite: &str, check: impl Into<String>, value: Option<f64>, threshold: Option<f64>, pass: bool) -> Self {
        Self {
            suite: suite.to_string(),
            check: check.into(),
            value,
            threshold,
            pass,
        }
    }
}

/// SHA-256 of the canonical (compact) JSON form of the config.
pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_string(config).expect("config serializes");
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn state_rows<'a>(
    x: &'a StateVector,
    layout: &'a StateLayout,
    names: &'a CompositionSet,
) -> impl Iterator<Item = (usize, String, f64)> + 'a {
    x.values().iter().enumerate().map(move |(i, &v)| {
        let (loc, comp) = layout.split_index(i).expect("state matches layout");
        (loc, names.names()[comp].clone(), v)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truth_csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path()).unwrap();
        let layout = StateLayout::new(2, 1).unwrap();
        let names = CompositionSet::new(["PM25"]).unwrap();
        let truth = TruthTrajectory {
            states: vec![
                StateVector::from_slice(&[1.0, 0.5], 0).unwrap(),
                StateVector::from_slice(&[0.25, 2.0], 1).unwrap(),
            ],
        };
        let path = out.write_truth(&truth, &layout, &names, 0.5).unwrap();
        let text = fs::read_to_string(path).unwrap();
        assert_eq!(
            text,
            "time,location,composition,value\n0,0,PM25,1\n0,1,PM25,0.5\n0.5,0,PM25,0.25\n0.5,1,PM25,2\n"
        );
    }

    #[test]
    fn summary_merges_commands() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutputDir::create(dir.path()).unwrap();
        out.write_summary("truth", json!({"rows": 3})).unwrap();
        out.write_summary("assimilate", json!({"max_abs_error": 0.0})).unwrap();
        let v: Value = serde_json::from_str(&fs::read_to_string(out.path("summary.json")).unwrap()).unwrap();
        assert_eq!(v["truth"]["rows"], 3);
        assert_eq!(v["assimilate"]["max_abs_error"], 0.0);
    }
}
