//! Sample covariance of the first analysis across an ensemble of observation
//! noise draws, against `Σ K R Kᵀ`.

use fourdvar::commands::covariance_agreement;
use fourdvar::config::RunConfig;
use fourdvar::lab::{analytic_analysis_covariance, ensemble_analysis};
use fourdvar::scenario::Scenario;

fn main() -> fourdvar::Result<()> {
    let mut config = RunConfig::from_json(include_str!("../../../configs/line.json"))?;
    config.lab.members = 2000;
    let s = Scenario::from_config(&config)?;
    let e = ensemble_analysis(&s, config.lab.members)?;
    let run = &e.runs[0];
    let p = s.window_problem(run.series.backgrounds[0].clone(), &run.windows[0])?;
    let r: Vec<_> = run.windows[0]
        .observations
        .iter()
        .map(|o| s.noise.covariance(o.values.len()))
        .collect();
    let analytic = analytic_analysis_covariance(&p, &r)?;
    let sample = e.result.cycles[0].covariance.clone();
    let (worst, pass) = covariance_agreement(&analytic, &sample, e.result.members)?;
    println!("members {}", e.result.members);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ");
    println!("diag analytic {}", fmt(analytic.diagonal().as_slice()));
    println!("diag sample   {}", fmt(e.result.cycles[0].variance.as_slice()));
    println!("worst scaled deviation {worst:.3} ({})", if pass { "within band" } else { "outside band" });
    Ok(())
}
