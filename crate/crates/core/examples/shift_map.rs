//! Replay the reanalysis from the shifted window sequence and check that the
//! k-th analysis only depends on windows up to k.

use fourdvar::config::RunConfig;
use fourdvar::lab::{shift_map_demo, window_samples, WindowSolver};
use fourdvar::scenario::Scenario;

fn main() -> fourdvar::Result<()> {
    let config = RunConfig::from_json(include_str!("../../../configs/line.json"))?;
    let s = Scenario::from_config(&config)?;
    let run = s.run_member(0)?;
    let omega = window_samples(&run.series, &run.windows)?;
    let solver = WindowSolver {
        b: s.b.clone(),
        tlm: s.tlm.clone(),
        steps_per_window: s.steps_per_window,
    };
    let guess = s.cycle_config(&run.truth, 0)?.guess().clone();
    let report = shift_map_demo(&solver, &guess, &run.series, &omega)?;
    for c in &report.checks {
        println!("k={} analysis match {} chain match {}", c.k, c.analysis, c.chain);
    }
    println!("passed: {}", report.passed());
    Ok(())
}
