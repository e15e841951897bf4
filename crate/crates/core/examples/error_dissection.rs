//! Split each analysis error into input error, model discrepancy and
//! observation error, then correlate them across 500 members.

use fourdvar::config::RunConfig;
use fourdvar::lab::{error_dissection, DissectionOptions};
use fourdvar::scenario::Scenario;

fn main() -> fourdvar::Result<()> {
    let config = RunConfig::from_json(include_str!("../../../configs/dissection.json"))?;
    let s = Scenario::from_config(&config)?;
    let runs = s.run_ensemble(config.lab.members)?;
    let report = error_dissection(
        &s,
        &runs,
        DissectionOptions {
            significance_sigmas: config.lab.significance_sigmas,
            bootstrap_resamples: config.lab.bootstrap_resamples,
            path: config.lab.discrepancy_path,
        },
    )?;
    println!("threshold |rho| = {:.3}", report.threshold);
    for c in &report.correlations {
        let rho = c.rho.map_or("undefined".into(), |r| format!("{r:+.3}"));
        let ci = c.ci.map_or(String::new(), |(lo, hi)| format!(" [{lo:+.3}, {hi:+.3}]"));
        println!("k={} {:<32} {rho}{ci}", c.k, c.label());
    }
    println!("cycle 0 independent:          {}", report.first_cycle_independent.name());
    println!("input ~ discrepancy, k >= 1:  {}", report.input_discrepancy_dependent.name());
    println!("observation independent:      {}", report.observation_independent.name());
    Ok(())
}
