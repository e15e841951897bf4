//! Closed-form analysis against conjugate gradients on the same window.

use fourdvar::config::RunConfig;
use fourdvar::cost::{solve_closed_form, solve_iterative};
use fourdvar::scenario::Scenario;

fn main() -> fourdvar::Result<()> {
    let config = RunConfig::from_json(include_str!("../../../configs/square.json"))?;
    let s = Scenario::from_config(&config)?;
    let run = s.run_member(0)?;
    let p = s.window_problem(run.series.backgrounds[0].clone(), &run.windows[0])?;

    let direct = solve_closed_form(&p)?;
    let cg = solve_iterative(&p, 1e-12, 10 * p.dim())?;
    let gap = (direct.x_a.values() - cg.x_a.values()).amax();
    println!("n = {}, CG iterations = {}", p.dim(), cg.iterations);
    println!("J at minimum: closed form {:.10}, CG {:.10}", direct.j_at_min, cg.j_at_min);
    println!("max |difference| = {gap:.2e}");
    Ok(())
}
