// Simulate a Scenario-2 trial, fit both arms and compute the CEP summary,
// writing the CEP JSON and an SVG scatter to the system temp directory.
//
// ```bash
// cargo run --release -p idcep --example cep
// ```

use idcep::cep::{cep_from_chain, CepConfig};
use idcep::inference::{fit, PriorConfig, SamplerConfig};
use idcep::simulate::{simulate_trial, ScenarioSpec};

pub fn run_example() -> idcep::Result<()> {
    run_with(3000, 900)
}

pub fn run_with(iterations: usize, burn_in: usize) -> idcep::Result<()> {
    let data = simulate_trial(&ScenarioSpec::preset(2)?.with_seed(5))?.observed();
    let sampler = SamplerConfig {
        iterations,
        burn_in,
        seed: 5,
        ..SamplerConfig::default()
    };
    let draws = fit(&data, &sampler, &PriorConfig::default())?;
    let result = cep_from_chain(&draws, &data, &CepConfig::default(), 5)?;
    let s = result.summary;
    let ci = |lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
        (Some(lo), Some(hi)) => format!("[{lo:.4}, {hi:.4}]"),
        _ => "n/a".to_string(),
    };
    println!("gamma0 {:.4} {}", s.g0_mean, ci(s.g0_lo, s.g0_hi));
    println!("gamma1 {:.4} {}", s.g1_mean, ci(s.g1_lo, s.g1_hi));
    println!("mean dS {:.4}, mean dT {:.4}", s.mean_ds, s.mean_dt);
    let dir = std::env::temp_dir();
    result.save_json(dir.join("idcep_cep.json"))?;
    result.save_svg(dir.join("idcep_cep.svg"))?;
    println!("wrote {}", dir.join("idcep_cep.{json,svg}").display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> idcep::Result<()> {
    run_example()
}
