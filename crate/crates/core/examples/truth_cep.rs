// Truth CEP lines of the eight preset scenarios, computed from the generating
// parameters.
//
// ```bash
// cargo run --release -p idcep --example truth_cep
// ```

use idcep::cep::{truth_cep_scenario, CepConfig};

pub fn run_example() -> idcep::Result<()> {
    run_with(200_000)
}

pub fn run_with(n_draws: usize) -> idcep::Result<()> {
    let config = CepConfig::default();
    println!("scenario   gamma0   gamma1  mean_dS  mean_dT");
    for id in 1..=8 {
        let r = truth_cep_scenario(id, &config, n_draws, 2024)?;
        let s = r.summary;
        println!(
            "{id:>8} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            s.g0_mean, s.g1_mean, s.mean_ds, s.mean_dt
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idcep::Result<()> {
    run_example()
}
