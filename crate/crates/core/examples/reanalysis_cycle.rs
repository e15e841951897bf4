//! Run the sequential reanalysis for one member and compare with the truth.

use fourdvar::config::RunConfig;
use fourdvar::scenario::Scenario;

fn main() -> fourdvar::Result<()> {
    let config = RunConfig::from_json(include_str!("../../../configs/line.json"))?;
    let s = Scenario::from_config(&config)?;
    let run = s.run_member(0)?;
    println!("{:>3} {:>12} {:>12} {:>12}", "k", "|x_B - x_t|", "|x_A - x_t|", "J_min");
    for (k, (a, xb)) in run.series.analyses.iter().zip(&run.series.backgrounds).enumerate() {
        let truth = run.truth.at(k * s.steps_per_window)?;
        println!(
            "{k:>3} {:>12.4} {:>12.4} {:>12.4}",
            (xb.values() - truth.values()).norm(),
            (a.x_a.values() - truth.values()).norm(),
            a.j_at_min
        );
    }
    Ok(())
}
