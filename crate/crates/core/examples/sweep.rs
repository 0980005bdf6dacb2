// Sensitivity of the Scenario-5 truth CEP to the unidentified cross-arm
// correlations and the frailty structure.
//
// ```bash
// cargo run --release -p idcep --example sweep
// ```

use idcep::cep::{sensitivity_sweep, CepConfig, SweepGrid, SweepTarget};
use idcep::simulate::scenario_arms;
use idcep::{FrailtyStructure, FullCorrelation};

pub fn run_example() -> idcep::Result<()> {
    run_with(50_000)
}

pub fn run_with(n_draws: usize) -> idcep::Result<()> {
    let (control, treated) = scenario_arms(5)?;
    let grid = SweepGrid {
        rho_s: vec![0.0, 0.25, 0.5, 0.75, 0.95],
        rho_t: vec![0.25, 0.5, 0.75],
        structures: vec![
            FrailtyStructure::Equal1323,
            FrailtyStructure::IndependentThree,
            FrailtyStructure::FullSix,
        ],
    };
    let base = CepConfig {
        full_corr: Some(FullCorrelation::strong_death_link()),
        ..CepConfig::default()
    };
    let target = SweepTarget::Truth {
        control: &control,
        treated: &treated,
        n_draws,
    };
    let table = sensitivity_sweep(target, &base, &grid, 3)?;
    println!("{:<18} {:>6} {:>6} {:>8} {:>8}", "structure", "rho_s", "rho_t", "gamma0", "gamma1");
    for r in &table.rows {
        println!(
            "{:<18} {:>6.2} {:>6.2} {:>8.4} {:>8.4}",
            format!("{:?}", r.structure),
            r.rho_s,
            r.rho_t,
            r.gamma0,
            r.gamma1
        );
    }
    for s in &table.skipped {
        println!("skipped {:?} rho_s={} rho_t={}: {}", s.structure, s.rho_s, s.rho_t, s.reason);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idcep::Result<()> {
    run_example()
}
