// Simulate every preset scenario, print the observed transition counts per
// arm and write Scenario 2 to a CSV in the system temp directory.
//
// ```bash
// cargo run --release -p idcep --example simulate
// ```

use idcep::simulate::{simulate_trial, ScenarioSpec};

pub fn run_example() -> idcep::Result<()> {
    run_with(600)
}

pub fn run_with(n: usize) -> idcep::Result<()> {
    println!("scenario  arm  1->2  1->3  2->3  censored-before-S");
    for id in 1..=8 {
        let trial = simulate_trial(&ScenarioSpec::preset(id)?.with_n(n).with_seed(7))?;
        let data = trial.observed();
        let counts = data.transition_counts();
        for z in 0..2u8 {
            let c = counts[z as usize];
            let arm_n = data.arm(z).len();
            println!(
                "{id:>8} {z:>4} {:>5} {:>5} {:>5} {:>18}",
                c[0],
                c[1],
                c[2],
                arm_n - c[0] - c[1]
            );
        }
        if id == 2 {
            let path = std::env::temp_dir().join("idcep_scenario2.csv");
            data.save(&path)?;
            trial.save_complete(std::env::temp_dir().join("idcep_scenario2_complete.csv"))?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idcep::Result<()> {
    run_example()
}
