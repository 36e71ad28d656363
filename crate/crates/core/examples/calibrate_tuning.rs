//! Null rejection rate of the score test over a grid of (c₁, c₂).
//!
//! ```text
//! cargo run --release -p intfactor --example calibrate_tuning -- [R] [jobs]
//! ```
//!
//! The shipped defaults come from this sweep with R = 300.

use intfactor::simulation::presets::by_name;
use intfactor::simulation::{run_replications, simulation_cv, MethodOptions, ScenarioDesign};

fn main() -> intfactor::Result<()> {
    let mut args = std::env::args().skip(1);
    let replications: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let jobs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let base = MethodOptions::default().with_cv(simulation_cv());
    println!("scenario,n,p,c1,c2,size,se");
    for name in ["score-case1-dense", "score-case2-dense"] {
        for (n, p) in [(100, 600), (200, 900)] {
            let sc = by_name(name, n, p)?;
            let design = ScenarioDesign::new(&sc)?;
            for c1 in [0.5, 0.75, 1.0] {
                for c2 in [0.25, 0.3, 0.35, 0.5] {
                    let mut opts = base.clone();
                    opts.score.c1 = c1;
                    opts.score.c2 = c2;
                    let curve = run_replications(&design, &opts, &[0.0], replications, 0.05, jobs)?;
                    println!(
                        "{name},{n},{p},{c1},{c2},{:.4},{:.4}",
                        curve.rates[0], curve.standard_errors[0]
                    );
                }
            }
        }
    }
    Ok(())
}
