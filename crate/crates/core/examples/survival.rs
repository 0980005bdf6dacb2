// Overall survival of a subject with zero frailties in each preset arm, and
// the effect of a one-sd frailty shift on the death hazards.
//
// ```bash
// cargo run --release -p idcep --example survival
// ```

use idcep::model::survival_prob;
use idcep::simulate::scenario_arms;
use idcep::{FrailtySet, Quadrature};

pub fn run_example() -> idcep::Result<()> {
    run_with(&[1.0, 2.0, 5.0])
}

pub fn run_with(taus: &[f64]) -> idcep::Result<()> {
    let quad = Quadrature::default();
    let zero = FrailtySet::default();
    let frail = FrailtySet::new(0.0, 0.4, 0.4);
    println!("scenario  tau   S_control  S_treated  S_treated(frail)");
    for id in 1..=8 {
        let (control, treated) = scenario_arms(id)?;
        for &tau in taus {
            let s0 = survival_prob(&control, &zero, tau, &quad)?;
            let s1 = survival_prob(&treated, &zero, tau, &quad)?;
            let s1f = survival_prob(&treated, &frail, tau, &quad)?;
            println!("{id:>8} {tau:>4.1} {s0:>10.4} {s1:>10.4} {s1f:>17.4}");
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> idcep::Result<()> {
    run_example()
}
