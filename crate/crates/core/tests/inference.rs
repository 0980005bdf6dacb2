mod common;

use idcep::data::{Dataset, SubjectRecord};
use idcep::frailty::FrailtyStructure;
use idcep::inference::{
    fit, fit_arm, log_lik_subject, log_posterior, log_posterior_block, mh_accept, ChainDraws, ParamBlock,
    PriorConfig, SamplerConfig,
};
use idcep::model::{ArmModel, FrailtySet, ModelVariant, TransitionParams};
use idcep::rng::substream;
use idcep::simulate::{simulate_trial, CensoringConfig, ScenarioSpec};
use idcep::FrailtyConfig;

use common::{ks_p_value, two_point_kernel_error};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Gamma};

fn toy_records() -> Vec<SubjectRecord> {
    let r = |id, s_time, s_event, t_time, t_event| SubjectRecord {
        id,
        z: 0,
        s_time,
        s_event,
        t_time,
        t_event,
    };
    vec![
        r(1, 0.4, true, 1.3, true),
        r(2, 0.9, false, 0.9, true),
        r(3, 2.0, false, 2.0, false),
        r(4, 0.2, true, 3.0, false),
        r(5, 1.1, true, 1.6, true),
    ]
}

fn toy_frailties() -> Vec<FrailtySet> {
    vec![
        FrailtySet::shared_death(0.1, -0.2),
        FrailtySet::shared_death(-0.3, 0.4),
        FrailtySet::shared_death(0.0, 0.1),
        FrailtySet::shared_death(0.5, -0.1),
        FrailtySet::shared_death(-0.2, 0.2),
    ]
}

fn toy_arm() -> ArmModel {
    ArmModel {
        t12: TransitionParams::weibull(0.8, 1.2),
        t13: TransitionParams::weibull(0.4, 0.9),
        t23: TransitionParams {
            theta: 0.2,
            ..TransitionParams::weibull(1.1, 1.3)
        },
        variant: ModelVariant::A,
    }
}

#[test]
fn block_difference_equals_full_posterior_difference() {
    let recs = toy_records();
    let w = toy_frailties();
    let priors = PriorConfig::default();
    let sampler = SamplerConfig::default();
    let base = toy_arm();
    let changes: [(ParamBlock, fn(&mut ArmModel)); 4] = [
        (ParamBlock::T12, |a| a.t12.gamma = 1.3),
        (ParamBlock::T12, |a| a.t12.alpha = 0.7),
        (ParamBlock::T13, |a| a.t13.gamma = 0.25),
        (ParamBlock::T23, |a| a.t23.theta = -0.4),
    ];
    for (block, change) in changes {
        let mut moved = base;
        change(&mut moved);
        let block_diff = log_posterior_block(block, &moved, &recs, &w, &priors, &sampler)
            - log_posterior_block(block, &base, &recs, &w, &priors, &sampler);
        let full_diff = log_posterior(&moved, &recs, &w, &priors, &sampler).unwrap()
            - log_posterior(&base, &recs, &w, &priors, &sampler).unwrap();
        assert!((block_diff - full_diff).abs() < 1e-10, "{block:?}: {block_diff} vs {full_diff}");
    }
}

#[test]
fn likelihood_matches_numerical_hazard_integration() {
    // the -2.5 example, with the cumulative hazards replaced by quadrature of
    // the hazard functions
    let arm = ArmModel::exponential(1.0, 1.0, 1.0);
    let r = SubjectRecord {
        id: 1,
        z: 0,
        s_time: 1.0,
        s_event: true,
        t_time: 1.5,
        t_event: true,
    };
    let w = FrailtySet::zero();
    let rule = idcep::quadrature::GaussLegendre::new(32).unwrap();
    let h = |p: &TransitionParams, t: f64| idcep::model::hazard(p, 0.0, t).unwrap();
    let l12 = rule.integrate(0.0, 1.0, |t| h(&arm.t12, t));
    let l13 = rule.integrate(0.0, 1.0, |t| h(&arm.t13, t));
    let l23 = rule.integrate(1.0, 1.5, |t| idcep::model::hazard_23(&arm, &w, t, 1.0).unwrap());
    let expected = h(&arm.t12, 1.0).ln() - l12 - l13 + idcep::model::hazard_23(&arm, &w, 1.5, 1.0).unwrap().ln() - l23;
    assert!((log_lik_subject(&r, &arm, &w).unwrap() - expected).abs() < 1e-12);
    assert!((expected + 2.5).abs() < 1e-12);
}

#[test]
fn constant_shift_leaves_decisions_unchanged() {
    let mut a = substream(3, 0, 0, 0);
    let mut b = substream(3, 0, 0, 0);
    let mut rng = substream(4, 0, 0, 0);
    for _ in 0..10_000 {
        let cur: f64 = rng.random_range(-5.0..0.0);
        let prop: f64 = rng.random_range(-5.0..0.0);
        assert_eq!(mh_accept(cur, prop, &mut a), mh_accept(cur + 17.5, prop + 17.5, &mut b));
    }
}

#[test]
fn two_point_kernel_matches_analytic() {
    assert!(two_point_kernel_error(100_000, 12) < 0.01);
}

fn small_dataset(seed: u64) -> Dataset {
    simulate_trial(&ScenarioSpec::preset(2).unwrap().with_n(120).with_seed(seed))
        .unwrap()
        .observed()
}

#[test]
fn identical_seeds_give_identical_chains() {
    let data = small_dataset(1);
    let sampler = SamplerConfig {
        iterations: 400,
        burn_in: 100,
        seed: 9,
        ..SamplerConfig::default()
    };
    let a = fit(&data, &sampler, &PriorConfig::default()).unwrap();
    let b = fit(&data, &sampler, &PriorConfig::default()).unwrap();
    assert_eq!(a, b);
    let other = fit(&data, &SamplerConfig { seed: 10, ..sampler }, &PriorConfig::default()).unwrap();
    assert_ne!(a.arms[0].draws, other.arms[0].draws);

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    a.save_dir(dir_a.path()).unwrap();
    b.save_dir(dir_b.path()).unwrap();
    for f in ["chain_params.csv", "chain_meta.json", "frailty_z0.csv", "frailty_z1.csv"] {
        let x = std::fs::read(dir_a.path().join(f)).unwrap();
        let y = std::fs::read(dir_b.path().join(f)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f}");
    }
    assert_eq!(ChainDraws::load_dir(dir_a.path()).unwrap(), a);
}

#[test]
fn chain_lengths_and_positivity() {
    let data = small_dataset(2);
    let sampler = SamplerConfig {
        iterations: 300,
        burn_in: 100,
        frailty_thin: 4,
        seed: 1,
        ..SamplerConfig::default()
    };
    let d = fit(&data, &sampler, &PriorConfig::default()).unwrap();
    for arm in &d.arms {
        assert_eq!(arm.draws.len(), 200);
        assert_eq!(arm.frailties.len(), 50);
        assert_eq!(arm.subject_ids.len(), 60);
        assert!(arm.draws.iter().all(|a| a.t12.gamma > 0.0 && a.t23.alpha > 0.0));
        assert!(arm.frailties.iter().flatten().all(|w| w.omega23 == w.omega13));
        for acc in &arm.acceptance {
            let r = acc.rate();
            assert!(r > 0.0 && r < 1.0, "{} {}", acc.block, r);
        }
    }
    let summary = d.summary(&data);
    assert_eq!(summary.arms[1].parameters[0].name, "gamma12");
}

#[test]
fn scenario_two_acceptance_rates_need_no_tuning_warning() {
    let data = simulate_trial(&ScenarioSpec::preset(2).unwrap().with_seed(3)).unwrap().observed();
    let sampler = SamplerConfig {
        seed: 3,
        ..SamplerConfig::default()
    };
    let d = fit(&data, &sampler, &PriorConfig::default()).unwrap();
    for arm in &d.arms {
        for block in ["params12", "params13", "params23"] {
            let r = arm.acceptance_rate(block).unwrap();
            assert!(r > 0.05 && r < 0.95, "arm {} {block}: {r}", arm.z);
        }
        assert!(arm.warnings.is_empty(), "{:?}", arm.warnings);
    }
}

#[test]
fn tiny_proposals_trigger_tuning_warning() {
    let data = small_dataset(4);
    let sampler = SamplerConfig {
        iterations: 200,
        burn_in: 50,
        proposal_sd_params: 1e-6,
        seed: 2,
        ..SamplerConfig::default()
    };
    let d = fit(&data, &sampler, &PriorConfig::default()).unwrap();
    assert!(d.arms[0].warnings.iter().any(|w| w.contains("acceptance rate")));
}

#[test]
fn missing_transition_is_flagged_but_runs() {
    // nobody reaches S: the 2→3 block is driven by its prior
    let records: Vec<SubjectRecord> = (0..40)
        .map(|i| SubjectRecord {
            id: i,
            z: (i % 2) as u8,
            s_time: 0.5 + 0.05 * i as f64,
            s_event: false,
            t_time: 0.5 + 0.05 * i as f64,
            t_event: i % 3 != 0,
        })
        .collect();
    let data = Dataset::new(records).unwrap();
    let sampler = SamplerConfig {
        iterations: 300,
        burn_in: 100,
        seed: 3,
        ..SamplerConfig::default()
    };
    let d = fit(&data, &sampler, &PriorConfig::default()).unwrap();
    assert!(d.arms[0].warnings.iter().any(|w| w.contains("1->2")));
    let g23 = d.arms[0].summary(&sampler).into_iter().find(|p| p.name == "gamma23").unwrap();
    // a prior-driven posterior is diffuse relative to its location
    assert!(g23.sd / g23.mean > 0.5, "prior-driven posterior should be diffuse: {g23:?}");
    let g13 = d.arms[0].summary(&sampler).into_iter().find(|p| p.name == "gamma13").unwrap();
    assert!(g13.sd / g13.mean < 0.5, "{g13:?}");
}

#[test]
fn variants_and_structures_run() {
    let data = small_dataset(5);
    for (variant, structure, free_kappa) in [
        (ModelVariant::A, FrailtyStructure::IndependentThree, false),
        (ModelVariant::A, FrailtyStructure::Equal1323, true),
        (ModelVariant::B, FrailtyStructure::Equal1323, false),
    ] {
        let sampler = SamplerConfig {
            iterations: 200,
            burn_in: 50,
            variant,
            fix_kappa_to_one: !free_kappa,
            frailty: FrailtyConfig {
                structure,
                ..FrailtyConfig::default()
            },
            seed: 4,
            ..SamplerConfig::default()
        };
        let d = fit(&data, &sampler, &PriorConfig::default()).unwrap();
        let names = idcep::inference::parameter_names(&sampler);
        let summary = d.arms[1].summary(&sampler);
        assert_eq!(summary.len(), names.len());
        if structure == FrailtyStructure::IndependentThree {
            assert!(d.arms[0].frailties.iter().flatten().any(|w| w.omega23 != w.omega13));
        }
    }
}

#[test]
fn posterior_equals_prior_without_information() {
    // every subject censored almost immediately: the likelihood is flat
    let records: Vec<SubjectRecord> = (0..10)
        .map(|i| SubjectRecord {
            id: i,
            z: 0,
            s_time: 1e-9,
            s_event: false,
            t_time: 1e-9,
            t_event: false,
        })
        .collect();
    let priors = PriorConfig {
        gamma_shape: 3.0,
        gamma_rate: 2.0,
        alpha_shape: 4.0,
        alpha_rate: 3.0,
        ..PriorConfig::default()
    };
    let thin = 25;
    let sampler = SamplerConfig {
        iterations: 3000 * thin + 500,
        burn_in: 500,
        proposal_sd_params: 0.6,
        allow_all_censored: true,
        frailty_thin: 1000,
        seed: 8,
        ..SamplerConfig::default()
    };
    let chain = fit_arm(&records, 0, &sampler, &priors).unwrap();
    let g = Gamma::new(priors.gamma_shape, priors.gamma_rate).unwrap();
    let a = Gamma::new(priors.alpha_shape, priors.alpha_rate).unwrap();
    let every = |f: fn(&ArmModel) -> f64| -> Vec<f64> { chain.draws.iter().step_by(thin).map(f).take(3000).collect() };
    for (name, mut v, dist) in [
        ("gamma12", every(|m| m.t12.gamma), &g),
        ("gamma13", every(|m| m.t13.gamma), &g),
        ("gamma23", every(|m| m.t23.gamma), &g),
        ("alpha12", every(|m| m.t12.alpha), &a),
        ("alpha23", every(|m| m.t23.alpha), &a),
    ] {
        assert_eq!(v.len(), 3000);
        let p = ks_p_value(&mut v, |x| dist.cdf(x));
        assert!(p > 0.01, "{name}: KS p = {p}");
    }
}

#[test]
fn likelihood_profile_peaks_at_generating_scale() {
    let spec = ScenarioSpec {
        censoring: CensoringConfig::default(),
        ..ScenarioSpec::preset(2).unwrap().with_n(10_000).with_seed(21)
    };
    let trial = simulate_trial(&spec).unwrap();
    let truth = *spec.arm(0);
    let control: Vec<_> = trial.subjects.iter().filter(|s| s.record.z == 0).collect();
    assert_eq!(control.len(), 5000);
    let profile = |g: f64| -> f64 {
        let mut arm = truth;
        arm.t12.gamma = g;
        control
            .iter()
            .map(|s| log_lik_subject(&s.record, &arm, &s.frailty[0]).unwrap())
            .sum()
    };
    let grid: Vec<f64> = (0..=100).map(|k| 0.5 + 0.01 * k as f64).collect();
    let best = grid
        .iter()
        .copied()
        .max_by(|a, b| profile(*a).total_cmp(&profile(*b)))
        .unwrap();
    assert!((best - truth.t12.gamma).abs() <= 0.1 * truth.t12.gamma, "profile max at {best}");
}
