//! Counterfactual illness-death trial simulation.
//!
//! Each subject gets frailties for both arms from the joint law, latent gap
//! times for both arms by inverse transform, and one censoring time. Only the
//! assigned arm is observed; the rest is kept for complete-data export.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Exp, Open01};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::frailty::{FrailtyConfig, JointFrailtyLaw};
use crate::model::{ArmModel, FrailtySet, TransitionParams};
use crate::rng::{substream, tag};

/// Censoring mechanisms; the observed censoring time is the minimum of both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CensoringConfig {
    /// Administrative end of follow-up.
    pub admin_time: Option<f64>,
    /// Rate of exponential random censoring; 0 disables it.
    pub random_rate: f64,
}

impl Default for CensoringConfig {
    fn default() -> Self {
        Self {
            admin_time: Some(10.0),
            random_rate: 0.0,
        }
    }
}

impl CensoringConfig {
    pub fn none() -> Self {
        Self {
            admin_time: None,
            random_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.admin_time {
            if !(t > 0.0) {
                return Err(Error::config(format!("admin_time must be positive, got {t}")));
            }
        }
        if !(self.random_rate >= 0.0) || !self.random_rate.is_finite() {
            return Err(Error::config(format!(
                "random_rate must be non-negative, got {}",
                self.random_rate
            )));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let admin = self.admin_time.unwrap_or(f64::INFINITY);
        if self.random_rate > 0.0 {
            let c: f64 = rng.sample(Exp::new(self.random_rate).expect("rate checked"));
            admin.min(c)
        } else {
            admin
        }
    }
}

/// Scale parameters `(γ12, γ13, γ23)` of the treated arm for the eight
/// preset scenarios; the control arm is `(1, 0.5, 1)` throughout.
pub const SCENARIO_TREATED_SCALES: [(f64, f64, f64); 8] = [
    (1.0, 0.5, 1.0),
    (0.61, 0.5, 1.0),
    (0.61, 0.5, 0.61),
    (0.61, 0.31, 1.0),
    (0.61, 0.31, 0.61),
    (1.0, 0.31, 0.61),
    (1.0, 0.5, 0.61),
    (1.0, 0.31, 1.0),
];

pub const SCENARIO_CONTROL_SCALES: (f64, f64, f64) = (1.0, 0.5, 1.0);

/// Description of a preset: which transitions differ between arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPreset {
    pub id: u8,
    pub control: ArmModel,
    pub treated: ArmModel,
    /// Whether λ12, λ13, λ23 are equal across arms.
    pub equal_12: bool,
    pub equal_13: bool,
    pub equal_23: bool,
    pub surrogacy: String,
}

/// Control and treated arms of preset scenario `id` (1..=8).
pub fn scenario_arms(id: u8) -> Result<(ArmModel, ArmModel)> {
    if !(1..=8).contains(&id) {
        return Err(Error::config(format!("scenario must be between 1 and 8, got {id}")));
    }
    let (c12, c13, c23) = SCENARIO_CONTROL_SCALES;
    let (t12, t13, t23) = SCENARIO_TREATED_SCALES[id as usize - 1];
    Ok((ArmModel::exponential(c12, c13, c23), ArmModel::exponential(t12, t13, t23)))
}

pub fn scenario_presets() -> Vec<ScenarioPreset> {
    (1..=8u8)
        .map(|id| {
            let (control, treated) = scenario_arms(id).expect("valid preset id");
            let eq = |a: &TransitionParams, b: &TransitionParams| a.gamma == b.gamma;
            let equal_12 = eq(&control.t12, &treated.t12);
            let equal_13 = eq(&control.t13, &treated.t13);
            let equal_23 = eq(&control.t23, &treated.t23);
            let surrogacy = match id {
                1 => "null case",
                2 => "perfect",
                3..=5 => "partial",
                _ => "not a surrogate",
            };
            ScenarioPreset {
                id,
                control,
                treated,
                equal_12,
                equal_13,
                equal_23,
                surrogacy: surrogacy.to_string(),
            }
        })
        .collect()
}

/// Everything needed to generate one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub scenario_id: Option<u8>,
    pub control: ArmModel,
    pub treated: ArmModel,
    #[serde(default)]
    pub frailty: FrailtyConfig,
    pub n: usize,
    #[serde(default)]
    pub censoring: CensoringConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioSpec {
    /// Preset scenario with 600 subjects, frailty sd 0.4 and cross-arm
    /// correlations 0.5.
    pub fn preset(id: u8) -> Result<Self> {
        let (control, treated) = scenario_arms(id)?;
        Ok(Self {
            scenario_id: Some(id),
            control,
            treated,
            frailty: FrailtyConfig::default(),
            n: 600,
            censoring: CensoringConfig::default(),
            seed: 0,
        })
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn arm(&self, z: u8) -> &ArmModel {
        if z == 0 {
            &self.control
        } else {
            &self.treated
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.control.validate(false)?;
        self.treated.validate(false)?;
        self.frailty.validate()?;
        self.censoring.validate()?;
        if self.n < 2 {
            return Err(Error::config("a trial needs at least two subjects"));
        }
        Ok(())
    }
}

/// Latent gap times of one subject in one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentTimes {
    /// Latent time to S.
    pub t12: f64,
    /// Latent time to death without S.
    pub t13: f64,
    /// Gap from S to death; `None` when death comes first.
    pub t23: Option<f64>,
}

impl LatentTimes {
    pub fn reaches_s(&self) -> bool {
        self.t23.is_some()
    }

    /// Calendar time of death.
    pub fn death_time(&self) -> f64 {
        match self.t23 {
            Some(g) => self.t12 + g,
            None => self.t13,
        }
    }
}

#[inline]
fn inverse_weibull<R: Rng + ?Sized>(rng: &mut R, scale: f64, alpha: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    let x = -u.ln() / scale;
    if alpha == 1.0 {
        x
    } else {
        x.powf(1.0 / alpha)
    }
}

/// Draws latent times for one subject in one arm from three independent streams.
pub fn draw_latent<R: Rng + ?Sized>(
    arm: &ArmModel,
    frailty: &FrailtySet,
    rng12: &mut R,
    rng13: &mut R,
    rng23: &mut R,
) -> LatentTimes {
    let t12 = inverse_weibull(rng12, arm.t12.scale_with_frailty(frailty.omega12), arm.t12.alpha);
    let t13 = inverse_weibull(rng13, arm.t13.scale_with_frailty(frailty.omega13), arm.t13.alpha);
    // always consume the gap draw so streams stay aligned
    let scale23 = arm.t23.gamma * arm.link23(frailty, t12).exp();
    let gap = inverse_weibull(rng23, scale23, arm.t23.alpha);
    LatentTimes {
        t12,
        t13,
        t23: (t12 < t13).then_some(gap),
    }
}

/// Death time of one simulated path, drawing everything from `rng`.
pub fn simulate_death_time<R: Rng + ?Sized>(arm: &ArmModel, frailty: &FrailtySet, rng: &mut R) -> f64 {
    let t12 = inverse_weibull(rng, arm.t12.scale_with_frailty(frailty.omega12), arm.t12.alpha);
    let t13 = inverse_weibull(rng, arm.t13.scale_with_frailty(frailty.omega13), arm.t13.alpha);
    if t13 <= t12 {
        return t13;
    }
    let scale23 = arm.t23.gamma * arm.link23(frailty, t12).exp();
    t12 + inverse_weibull(rng, scale23, arm.t23.alpha)
}

/// Applies censoring at `censor` to latent times.
pub fn observe(id: u64, z: u8, latent: &LatentTimes, censor: f64) -> SubjectRecord {
    let censored = |t: f64| SubjectRecord {
        id,
        z,
        s_time: t,
        s_event: false,
        t_time: t,
        t_event: false,
    };
    match latent.t23 {
        None => {
            if latent.t13 <= censor {
                SubjectRecord {
                    id,
                    z,
                    s_time: latent.t13,
                    s_event: false,
                    t_time: latent.t13,
                    t_event: true,
                }
            } else {
                censored(censor)
            }
        }
        Some(gap) => {
            if latent.t12 > censor {
                return censored(censor);
            }
            let death = latent.t12 + gap;
            SubjectRecord {
                id,
                z,
                s_time: latent.t12,
                s_event: true,
                t_time: death.min(censor),
                t_event: death <= censor,
            }
        }
    }
}

/// One simulated subject with its complete (counterfactual) data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedSubject {
    pub record: SubjectRecord,
    pub censor_time: f64,
    /// Indexed by arm.
    pub latent: [LatentTimes; 2],
    pub frailty: [FrailtySet; 2],
}

fn latent_streams(seed: u64, id: u64, z: u8) -> [crate::rng::StreamRng; 3] {
    let z = z as u64;
    [
        substream(seed, tag::LATENT_12, id, z),
        substream(seed, tag::LATENT_13, id, z),
        substream(seed, tag::LATENT_23, id, z),
    ]
}

/// Simulates the observed records of subjects assigned to one arm. Each
/// element of `subjects` is `(id, frailties in this arm)`.
pub fn simulate_arm(
    arm: &ArmModel,
    z: u8,
    subjects: &[(u64, FrailtySet)],
    censoring: &CensoringConfig,
    seed: u64,
) -> Result<Vec<SubjectRecord>> {
    arm.validate(false)?;
    censoring.validate()?;
    Ok(subjects
        .iter()
        .map(|(id, w)| {
            let [mut r12, mut r13, mut r23] = latent_streams(seed, *id, z);
            let latent = draw_latent(arm, w, &mut r12, &mut r13, &mut r23);
            let censor = censoring.draw(&mut substream(seed, tag::CENSOR, *id, 0));
            observe(*id, z, &latent, censor)
        })
        .collect())
}

/// Complete-data output of [`simulate_trial`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedTrial {
    pub subjects: Vec<SimulatedSubject>,
}

impl SimulatedTrial {
    pub fn observed(&self) -> Dataset {
        Dataset {
            records: self.subjects.iter().map(|s| s.record).collect(),
        }
    }

    pub fn write_complete_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["id", "z", "s_time", "s_event", "t_time", "t_event"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.push("latent_censor".into());
        for z in 0..2 {
            for name in ["t12", "t13", "t23"] {
                header.push(format!("latent_{name}_{z}"));
            }
        }
        for z in 0..2 {
            for name in ["12", "13", "23"] {
                header.push(format!("omega_{name}_{z}"));
            }
        }
        wtr.write_record(&header)?;
        for s in &self.subjects {
            let r = &s.record;
            let mut row = vec![
                r.id.to_string(),
                r.z.to_string(),
                r.s_time.to_string(),
                u8::from(r.s_event).to_string(),
                r.t_time.to_string(),
                u8::from(r.t_event).to_string(),
                s.censor_time.to_string(),
            ];
            for l in &s.latent {
                row.push(l.t12.to_string());
                row.push(l.t13.to_string());
                row.push(l.t23.map(|g| g.to_string()).unwrap_or_default());
            }
            for w in &s.frailty {
                row.push(w.omega12.to_string());
                row.push(w.omega13.to_string());
                row.push(w.omega23.to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_complete(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        self.write_complete_csv(std::io::BufWriter::new(file))
    }
}

/// Simulates a two-arm trial: the first `n - n/2` subjects are controls, the
/// remaining `n/2` are treated. Ids start at 1.
pub fn simulate_trial(spec: &ScenarioSpec) -> Result<SimulatedTrial> {
    spec.validate()?;
    let law = JointFrailtyLaw::new(&spec.frailty)?;
    let n_control = spec.n - spec.n / 2;
    let subjects = (0..spec.n)
        .map(|i| {
            let id = i as u64 + 1;
            let z: u8 = if i < n_control { 0 } else { 1 };
            let (w0, w1) = law.draw(&mut substream(spec.seed, tag::FRAILTY, id, 0));
            let frailty = [w0, w1];
            let latent = [0u8, 1].map(|arm_z| {
                let [mut r12, mut r13, mut r23] = latent_streams(spec.seed, id, arm_z);
                draw_latent(spec.arm(arm_z), &frailty[arm_z as usize], &mut r12, &mut r13, &mut r23)
            });
            let censor_time = spec.censoring.draw(&mut substream(spec.seed, tag::CENSOR, id, 0));
            SimulatedSubject {
                record: observe(id, z, &latent[z as usize], censor_time),
                censor_time,
                latent,
                frailty,
            }
        })
        .collect();
    Ok(SimulatedTrial { subjects })
}
