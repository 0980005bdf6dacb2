// Fit the per-arm illness-death frailty model to a simulated Scenario-2 trial
// and print posterior summaries.
//
// ```bash
// cargo run --release -p idcep --example fit
// ```

use idcep::inference::{fit, PriorConfig, SamplerConfig};
use idcep::simulate::{simulate_trial, ScenarioSpec};

pub fn run_example() -> idcep::Result<()> {
    run_with(3000, 900)
}

pub fn run_with(iterations: usize, burn_in: usize) -> idcep::Result<()> {
    let spec = ScenarioSpec::preset(2)?.with_seed(11);
    let data = simulate_trial(&spec)?.observed();
    let sampler = SamplerConfig {
        iterations,
        burn_in,
        seed: 11,
        ..SamplerConfig::default()
    };
    let draws = fit(&data, &sampler, &PriorConfig::default())?;
    let summary = draws.summary(&data);
    for arm in &summary.arms {
        println!("arm {} ({} subjects, transitions {:?})", arm.z, arm.subjects, arm.transitions);
        for p in &arm.parameters {
            println!("  {:<8} mean {:>7.4}  sd {:.4}  95% [{:.4}, {:.4}]", p.name, p.mean, p.sd, p.q025, p.q975);
        }
        for a in &arm.acceptance {
            println!("  accept {:<9} {:.3}", a.block, a.rate);
        }
        for w in &arm.warnings {
            println!("  warning: {w}");
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idcep::Result<()> {
    run_example()
}
