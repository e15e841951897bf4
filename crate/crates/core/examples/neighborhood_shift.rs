//! Spatial shift checks on a periodic 3x3 grid.

use fourdvar::config::RunConfig;
use fourdvar::lab::{neighborhood_shift_demo, window_samples, WindowSolver};
use fourdvar::scenario::Scenario;

fn main() -> fourdvar::Result<()> {
    let config = RunConfig::from_json(include_str!("../../../configs/square.json"))?;
    let s = Scenario::from_config(&config)?;
    let run = s.run_member(0)?;
    let omega = window_samples(&run.series, &run.windows)?;
    let solver = WindowSolver {
        b: s.b.clone(),
        tlm: s.tlm.clone(),
        steps_per_window: s.steps_per_window,
    };
    let report = neighborhood_shift_demo(&s.grid, &s.layout, &solver, &omega[0], &run.series.analyses[0].x_a)?;
    let centre = s.grid.cell_at(1, 1);
    let at_centre = report.checks.iter().filter(|c| c.position == centre).count();
    println!("{} neighbour checks, {at_centre} around the centre cell", report.checks.len());
    match report.first_failure() {
        None => println!("all passed"),
        Some((a, b)) => println!("first failure between cells {a} and {b}"),
    }
    Ok(())
}
