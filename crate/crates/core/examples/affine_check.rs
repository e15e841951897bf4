//! The analysis is affine in the observations: superposition, offset and
//! scaling checks on random probes.

use fourdvar::config::RunConfig;
use fourdvar::lab::verify_affine;
use fourdvar::scenario::Scenario;
use fourdvar::world::{StreamPurpose, SHARED_MEMBER};

fn main() -> fourdvar::Result<()> {
    let config = RunConfig::from_json(include_str!("../../../configs/line.json"))?;
    let s = Scenario::from_config(&config)?;
    let run = s.run_member(0)?;
    let p = s.window_problem(run.series.backgrounds[0].clone(), &run.windows[0])?;
    let mut rng = s.seeds.stream(SHARED_MEMBER, 0, StreamPurpose::Probe);
    let r = verify_affine(&p, 5, &mut rng)?;
    println!("superposition {:.2e}", r.superposition);
    println!("offset        {:.2e}", r.offset);
    println!("gain          {:.2e}", r.gain);
    println!("scaling       {:.2e}", r.scaling);
    println!("tolerance {:.0e}, passed {}", r.tolerance, r.passed());
    Ok(())
}
