use idcep::model::{ArmModel, FrailtySet};
use idcep::rng::substream;
use idcep::simulate::{simulate_arm, simulate_death_time, simulate_trial, CensoringConfig, ScenarioSpec};
use idcep::{ObservedCase, Quadrature};

const N: usize = 100_000;

fn zero_frailty_arm(arm: &ArmModel, seed: u64) -> Vec<idcep::SubjectRecord> {
    let subjects: Vec<(u64, FrailtySet)> = (0..N as u64).map(|i| (i, FrailtySet::default())).collect();
    simulate_arm(arm, 0, &subjects, &CensoringConfig::none(), seed).unwrap()
}

#[test]
fn first_event_time_follows_combined_exponential() {
    let (g12, g13) = (1.0, 0.5);
    let records = zero_frailty_arm(&ArmModel::exponential(g12, g13, 1.0), 31);
    // Without censoring the Kaplan–Meier estimate is the empirical survival.
    for t in [0.5, 1.0, 2.0] {
        let km = records.iter().filter(|r| r.s_time > t).count() as f64 / N as f64;
        let truth = (-(g12 + g13) * t).exp();
        let se = (truth * (1.0 - truth) / N as f64).sqrt();
        assert!((km - truth).abs() < 3.0 * se, "t={t}: {km} vs {truth}");
    }
}

#[test]
fn illness_sub_distribution_matches_formula() {
    let (g12, g13) = (0.8, 0.6);
    let records = zero_frailty_arm(&ArmModel::exponential(g12, g13, 1.3), 32);
    for t in [0.25, 0.75, 1.5, 4.0] {
        let empirical = records.iter().filter(|r| r.s_event && r.s_time <= t).count() as f64 / N as f64;
        let truth = g12 / (g12 + g13) * (1.0 - (-(g12 + g13) * t).exp());
        let se = (truth * (1.0 - truth) / N as f64).sqrt();
        assert!((empirical - truth).abs() < 3.0 * se, "t={t}: {empirical} vs {truth}");
    }
}

#[test]
fn gap_times_follow_clock_reset_exponential() {
    let g23 = 1.3;
    let records = zero_frailty_arm(&ArmModel::exponential(0.8, 0.6, g23), 33);
    let gaps: Vec<f64> = records.iter().filter_map(|r| r.t23()).collect();
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let se = (1.0 / g23) / (gaps.len() as f64).sqrt();
    assert!((mean - 1.0 / g23).abs() < 3.0 * se, "{mean}");
}

#[test]
fn every_record_falls_in_one_observable_case() {
    let data = simulate_trial(&ScenarioSpec::preset(5).unwrap().with_n(2000).with_seed(3)).unwrap().observed();
    let mut seen = std::collections::HashSet::new();
    for r in &data.records {
        r.validate().unwrap();
        if !r.s_event {
            assert_eq!(r.s_time, r.t_time);
        }
        seen.insert(r.case());
    }
    assert!(seen.contains(&ObservedCase::IllnessDeath));
    assert!(seen.len() >= 3);
}

#[test]
fn survival_matches_simulated_death_times() {
    // Each scenario-4 arm at zero frailty against inverse-transform paths.
    let (control, treated) = idcep::simulate::scenario_arms(4).unwrap();
    let quad = Quadrature::default();
    let tau = 5.0;
    let mut dt_paths = 0.0;
    let mut var = 0.0;
    for (k, arm) in [control, treated].iter().enumerate() {
        let mut rng = substream(55, 0, k as u64, 0);
        let paths = 1_000_000;
        let alive = (0..paths)
            .filter(|_| simulate_death_time(arm, &FrailtySet::default(), &mut rng) > tau)
            .count() as f64
            / paths as f64;
        let exact = idcep::model::survival_prob(arm, &FrailtySet::default(), tau, &quad).unwrap();
        let se = (alive * (1.0 - alive) / paths as f64).sqrt();
        assert!((alive - exact).abs() < 3.0 * se, "arm {k}: {alive} vs {exact}");
        dt_paths += if k == 1 { alive } else { -alive };
        var += se * se;
    }
    let dt = idcep::cep::delta_t(&control, &FrailtySet::default(), &treated, &FrailtySet::default(), tau, &quad).unwrap();
    assert!((dt - dt_paths).abs() < 3.0 * var.sqrt(), "{dt} vs {dt_paths}");
}
