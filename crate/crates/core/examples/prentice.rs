// Conventional Weibull proportional-hazards surrogacy checks on simulated
// trials: a valid surrogate (Scenario 2) against a non-surrogate (Scenario 8).
//
// ```bash
// cargo run --release -p idcep --example prentice
// ```

use idcep::prentice::{prentice_report, OptimConfig, PrenticeModel};
use idcep::simulate::{simulate_trial, ScenarioSpec};

pub fn run_example() -> idcep::Result<()> {
    run_with(4000)
}

pub fn run_with(n: usize) -> idcep::Result<()> {
    for id in [2u8, 8] {
        let data = simulate_trial(&ScenarioSpec::preset(id)?.with_n(n).with_seed(17))?.observed();
        let report = prentice_report(&data, &OptimConfig::default())?;
        println!("scenario {id}");
        for model in PrenticeModel::ALL {
            let Some(fit) = report.fit(model) else { continue };
            for c in &fit.coefficients {
                println!(
                    "  {model:?} {:<2} HR {:.3}  95% [{:.3}, {:.3}]  p {:.2e}",
                    c.name,
                    c.hazard_ratio,
                    (c.estimate - 1.96 * c.se).exp(),
                    (c.estimate + 1.96 * c.se).exp(),
                    c.p_value
                );
            }
        }
        if let Some(pe) = report.proportion_explained {
            println!("  proportion explained {pe:.3}");
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idcep::Result<()> {
    run_example()
}
