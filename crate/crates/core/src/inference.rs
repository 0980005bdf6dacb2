//! Observed-data likelihood, priors and the per-arm block Metropolis–Hastings
//! sampler.
//!
//! Each arm is fitted separately. Within an iteration the blocks are visited in
//! the order ω12 (per subject), {γ12, α12}, ω13 (per subject), {γ13, α13},
//! ω23 (per subject, only when ω23 is not tied to ω13), and the 2→3 block
//! {γ23, α23, θ23 | κ12*, κ13*, κ23 when free}. All proposals are Gaussian
//! random walks, so acceptance uses the posterior ratio alone.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use statrs::function::gamma::ln_gamma;

use crate::data::{Dataset, SubjectRecord};
use crate::error::{Error, Result};
use crate::frailty::{FrailtyConfig, FrailtyStructure};
use crate::model::{ArmModel, FrailtySet, ModelVariant, TransitionParams};
use crate::rng::{substream, tag, StreamRng};

/// Gamma(shape, rate) priors on Weibull scales and shapes, diffuse normals on
/// coefficients, normal frailties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Shape of the Gamma prior on every γ.
    pub gamma_shape: f64,
    /// Rate of the Gamma prior on every γ.
    pub gamma_rate: f64,
    /// Shape of the Gamma prior on every α.
    pub alpha_shape: f64,
    /// Rate of the Gamma prior on every α.
    pub alpha_rate: f64,
    /// Standard deviation of the zero-mean normal prior on θ and κ.
    pub coef_prior_sd: f64,
    /// Standard deviation of the zero-mean normal prior on every frailty.
    pub frailty_prior_sd: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            gamma_shape: 0.1,
            gamma_rate: 0.1,
            alpha_shape: 0.1,
            alpha_rate: 0.1,
            coef_prior_sd: 10.0,
            frailty_prior_sd: 0.4,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_shape", self.gamma_shape),
            ("gamma_rate", self.gamma_rate),
            ("alpha_shape", self.alpha_shape),
            ("alpha_rate", self.alpha_rate),
            ("coef_prior_sd", self.coef_prior_sd),
            ("frailty_prior_sd", self.frailty_prior_sd),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("prior {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    /// Random-walk sd for every structural parameter.
    pub proposal_sd_params: f64,
    /// Random-walk sd for every frailty.
    pub proposal_sd_frailty: f64,
    /// Keep κ23 at 1 (κ12 and κ13 are always 1).
    pub fix_kappa_to_one: bool,
    /// Exponential baselines: all α held at 1.
    pub fix_alpha_to_one: bool,
    pub variant: ModelVariant,
    /// Within-arm frailty structure; `sigma_omega` and cross-arm entries are
    /// not used by the sampler.
    pub frailty: FrailtyConfig,
    /// Keep every `frailty_thin`-th post-burn-in frailty draw.
    pub frailty_thin: usize,
    /// Robbins–Monro scaling of proposal sds during burn-in.
    pub adapt_during_burn_in: bool,
    /// Accept arms without any observed event.
    pub allow_all_censored: bool,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 3000,
            burn_in: 900,
            proposal_sd_params: 0.1,
            proposal_sd_frailty: 0.4,
            fix_kappa_to_one: true,
            fix_alpha_to_one: false,
            variant: ModelVariant::A,
            frailty: FrailtyConfig::default(),
            frailty_thin: 1,
            adapt_during_burn_in: false,
            allow_all_censored: false,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be positive"));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::config(format!(
                "burn_in ({}) must be smaller than iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        for (name, v) in [
            ("proposal_sd_params", self.proposal_sd_params),
            ("proposal_sd_frailty", self.proposal_sd_frailty),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.frailty_thin == 0 {
            return Err(Error::config("frailty_thin must be at least 1"));
        }
        self.frailty.validate()
    }

    fn shared_death(&self) -> bool {
        self.frailty.structure == FrailtyStructure::Equal1323
    }
}

// ---------------------------------------------------------------------------
// densities

/// Log density of Gamma(shape, rate) at `x`; −∞ outside the support.
pub fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Log density of N(mean, sd²) at `x`.
pub fn normal_log_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

// ---------------------------------------------------------------------------
// likelihood

#[inline]
fn log_hazard(p: &TransitionParams, omega: f64, t: f64) -> f64 {
    let log_t_term = if p.alpha == 1.0 { 0.0 } else { (p.alpha - 1.0) * t.ln() };
    p.gamma.ln() + p.alpha.ln() + log_t_term + p.kappa * omega
}

#[inline]
fn cum(p: &TransitionParams, omega: f64, t: f64) -> f64 {
    p.scale_with_frailty(omega) * crate::model::pow_shape(t, p.alpha)
}

/// 1→2 part of a subject's log-likelihood.
#[inline]
pub fn term12(r: &SubjectRecord, arm: &ArmModel, w: &FrailtySet) -> f64 {
    let t = r.s_time;
    let mut v = -cum(&arm.t12, w.omega12, t);
    if r.s_event {
        v += log_hazard(&arm.t12, w.omega12, t);
    }
    v
}

/// 1→3 part of a subject's log-likelihood.
#[inline]
pub fn term13(r: &SubjectRecord, arm: &ArmModel, w: &FrailtySet) -> f64 {
    let t = r.s_time;
    let mut v = -cum(&arm.t13, w.omega13, t);
    if !r.s_event && r.t_event {
        v += log_hazard(&arm.t13, w.omega13, t);
    }
    v
}

/// 2→3 part of a subject's log-likelihood (zero when S was not observed).
#[inline]
pub fn term23(r: &SubjectRecord, arm: &ArmModel, w: &FrailtySet) -> f64 {
    if !r.s_event {
        return 0.0;
    }
    let t12 = r.s_time;
    let gap = r.t_time - r.s_time;
    let p = &arm.t23;
    let link = arm.link23(w, t12);
    let mut v = -p.gamma * crate::model::pow_shape(gap, p.alpha) * link.exp();
    if r.t_event {
        let log_t_term = if p.alpha == 1.0 { 0.0 } else { (p.alpha - 1.0) * gap.ln() };
        v += p.gamma.ln() + p.alpha.ln() + log_t_term + link;
    }
    v
}

/// Log-likelihood contribution of one subject given its frailties.
pub fn log_lik_subject(record: &SubjectRecord, arm: &ArmModel, frailty: &FrailtySet) -> Result<f64> {
    record.validate()?;
    arm.validate(false)?;
    let zero_event = |time: f64, alpha: f64| time == 0.0 && alpha < 1.0;
    if record.s_event && zero_event(record.s_time, arm.t12.alpha) {
        return Err(Error::domain(format!(
            "subject {}: S at time 0 has infinite hazard for shape {}",
            record.id, arm.t12.alpha
        )));
    }
    if !record.s_event && record.t_event && zero_event(record.t_time, arm.t13.alpha) {
        return Err(Error::domain(format!(
            "subject {}: death at time 0 has infinite hazard for shape {}",
            record.id, arm.t13.alpha
        )));
    }
    if record.s_event && record.t_event && zero_event(record.t_time - record.s_time, arm.t23.alpha) {
        return Err(Error::domain(format!(
            "subject {}: zero gap to death has infinite hazard for shape {}",
            record.id, arm.t23.alpha
        )));
    }
    Ok(term12(record, arm, frailty) + term13(record, arm, frailty) + term23(record, arm, frailty))
}

// ---------------------------------------------------------------------------
// blocks

/// Structural parameter blocks of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamBlock {
    T12,
    T13,
    T23,
}

/// How a block's free values map onto an [`ArmModel`].
#[derive(Debug, Clone)]
struct BlockLayout {
    block: ParamBlock,
    names: Vec<&'static str>,
}

impl BlockLayout {
    fn new(block: ParamBlock, cfg: &SamplerConfig) -> Self {
        let mut names = Vec::new();
        match block {
            ParamBlock::T12 | ParamBlock::T13 => {
                names.push("gamma");
                if !cfg.fix_alpha_to_one {
                    names.push("alpha");
                }
            }
            ParamBlock::T23 => {
                names.push("gamma");
                if !cfg.fix_alpha_to_one {
                    names.push("alpha");
                }
                match cfg.variant {
                    ModelVariant::A => {
                        names.push("theta");
                        if !cfg.fix_kappa_to_one {
                            names.push("kappa");
                        }
                    }
                    ModelVariant::B => {
                        names.push("kappa12_star");
                        names.push("kappa13_star");
                    }
                }
            }
        }
        Self { block, names }
    }

    fn transition<'a>(&self, arm: &'a mut ArmModel) -> &'a mut TransitionParams {
        match self.block {
            ParamBlock::T12 => &mut arm.t12,
            ParamBlock::T13 => &mut arm.t13,
            ParamBlock::T23 => &mut arm.t23,
        }
    }

    fn get(&self, arm: &ArmModel) -> Vec<f64> {
        let mut a = *arm;
        let p = *self.transition(&mut a);
        self.names
            .iter()
            .map(|n| match *n {
                "gamma" => p.gamma,
                "alpha" => p.alpha,
                "theta" => p.theta,
                "kappa" => p.kappa,
                "kappa12_star" => p.kappa12_star,
                "kappa13_star" => p.kappa13_star,
                _ => unreachable!(),
            })
            .collect()
    }

    fn set(&self, arm: &mut ArmModel, values: &[f64]) {
        let p = self.transition(arm);
        for (n, v) in self.names.iter().zip(values) {
            match *n {
                "gamma" => p.gamma = *v,
                "alpha" => p.alpha = *v,
                "theta" => p.theta = *v,
                "kappa" => p.kappa = *v,
                "kappa12_star" => p.kappa12_star = *v,
                "kappa13_star" => p.kappa13_star = *v,
                _ => unreachable!(),
            }
        }
    }

    fn log_prior(&self, values: &[f64], priors: &PriorConfig) -> f64 {
        self.names
            .iter()
            .zip(values)
            .map(|(n, v)| match *n {
                "gamma" => gamma_log_pdf(*v, priors.gamma_shape, priors.gamma_rate),
                "alpha" => gamma_log_pdf(*v, priors.alpha_shape, priors.alpha_rate),
                _ => normal_log_pdf(*v, 0.0, priors.coef_prior_sd),
            })
            .sum()
    }
}

fn block_loglik(block: ParamBlock, records: &[SubjectRecord], arm: &ArmModel, frailties: &[FrailtySet]) -> f64 {
    let f = match block {
        ParamBlock::T12 => term12,
        ParamBlock::T13 => term13,
        ParamBlock::T23 => term23,
    };
    records.iter().zip(frailties).map(|(r, w)| f(r, arm, w)).sum()
}

/// Block log-posterior: the log-likelihood terms touched by `block` summed over
/// the arm's subjects, plus the log-priors of the block's free parameters.
/// Returns −∞ for proposals outside the support.
pub fn log_posterior_block(
    block: ParamBlock,
    arm: &ArmModel,
    records: &[SubjectRecord],
    frailties: &[FrailtySet],
    priors: &PriorConfig,
    sampler: &SamplerConfig,
) -> f64 {
    let layout = BlockLayout::new(block, sampler);
    let values = layout.get(arm);
    let lp = layout.log_prior(&values, priors);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    let ll = block_loglik(block, records, arm, frailties);
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp + ll
    }
}

/// Joint log-posterior of one arm (up to a constant).
pub fn log_posterior(
    arm: &ArmModel,
    records: &[SubjectRecord],
    frailties: &[FrailtySet],
    priors: &PriorConfig,
    sampler: &SamplerConfig,
) -> Result<f64> {
    let prior = FrailtyPrior::new(&sampler.frailty, priors.frailty_prior_sd, 0)?;
    let mut total = 0.0;
    for block in [ParamBlock::T12, ParamBlock::T13, ParamBlock::T23] {
        let layout = BlockLayout::new(block, sampler);
        total += layout.log_prior(&layout.get(arm), priors);
    }
    for (r, w) in records.iter().zip(frailties) {
        total += term12(r, arm, w) + term13(r, arm, w) + term23(r, arm, w);
        total += prior.log_density(w, r.s_event);
    }
    Ok(total)
}

/// Metropolis acceptance for a symmetric proposal: accept with probability
/// `min(1, exp(proposed - current))`.
pub fn mh_accept<R: Rng + ?Sized>(current_lp: f64, proposed_lp: f64, rng: &mut R) -> bool {
    let u: f64 = rng.sample(Open01);
    if proposed_lp.is_nan() || proposed_lp == f64::NEG_INFINITY {
        return false;
    }
    let delta = proposed_lp - current_lp;
    delta >= 0.0 || u.ln() < delta
}

/// Outcome of one random-walk Metropolis update.
#[derive(Debug, Clone, PartialEq)]
pub struct MhOutcome {
    pub values: Vec<f64>,
    pub log_target: f64,
    pub accepted: bool,
}

/// One Gaussian random-walk Metropolis update of a block of values.
pub fn mh_update<R, F>(current: &[f64], current_lp: f64, proposal_sd: f64, mut log_target: F, rng: &mut R) -> MhOutcome
where
    R: Rng + ?Sized,
    F: FnMut(&[f64]) -> f64,
{
    let proposed: Vec<f64> = current
        .iter()
        .map(|v| v + proposal_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let lp = log_target(&proposed);
    if mh_accept(current_lp, lp, rng) {
        MhOutcome {
            values: proposed,
            log_target: lp,
            accepted: true,
        }
    } else {
        MhOutcome {
            values: current.to_vec(),
            log_target: current_lp,
            accepted: false,
        }
    }
}

// ---------------------------------------------------------------------------
// frailty prior

/// Within-arm normal prior of a subject's free frailties.
#[derive(Debug, Clone)]
struct FrailtyPrior {
    shared_death: bool,
    /// Precision of (ω12, ω13[, ω23]).
    precision: DMatrix<f64>,
    /// Precision of (ω12, ω13) alone, for subjects without S.
    precision_no_s: DMatrix<f64>,
    /// Conditional law of ω23 given (ω12, ω13): regression row and sd.
    w23_given: ([f64; 2], f64),
}

impl FrailtyPrior {
    fn new(frailty: &FrailtyConfig, sd: f64, z: usize) -> Result<Self> {
        let cfg = FrailtyConfig {
            sigma_omega: sd,
            ..*frailty
        };
        let cov = cfg.within_arm_covariance(z)?;
        let pinv = |m: &DMatrix<f64>| {
            m.clone()
                .pseudo_inverse(1e-12)
                .map_err(|e| Error::config(format!("frailty prior covariance: {e}")))
        };
        let precision = pinv(&cov)?;
        let sub = cov.view((0, 0), (2, 2)).into_owned();
        let precision_no_s = pinv(&sub)?;
        let w23_given = if cov.nrows() == 3 {
            let s_uo = DMatrix::from_row_slice(1, 2, &[cov[(2, 0)], cov[(2, 1)]]);
            let reg = &s_uo * &precision_no_s;
            let var = cov[(2, 2)] - (&reg * s_uo.transpose())[(0, 0)];
            ([reg[(0, 0)], reg[(0, 1)]], var.max(0.0).sqrt())
        } else {
            ([0.0, 1.0], 0.0)
        };
        Ok(Self {
            shared_death: cov.nrows() == 2,
            precision,
            precision_no_s,
            w23_given,
        })
    }

    /// Log prior density (up to a constant). For subjects without S under an
    /// untied ω23, ω23 is integrated out.
    fn log_density(&self, w: &FrailtySet, has_s: bool) -> f64 {
        let quad = |p: &DMatrix<f64>, x: &[f64]| {
            let mut q = 0.0;
            for i in 0..x.len() {
                for j in 0..x.len() {
                    q += x[i] * p[(i, j)] * x[j];
                }
            }
            -0.5 * q
        };
        if self.shared_death || !has_s {
            quad(&self.precision_no_s, &[w.omega12, w.omega13])
        } else {
            quad(&self.precision, &[w.omega12, w.omega13, w.omega23])
        }
    }

    fn draw_w23<R: Rng + ?Sized>(&self, w: &FrailtySet, rng: &mut R) -> f64 {
        let ([b12, b13], sd) = self.w23_given;
        b12 * w.omega12 + b13 * w.omega13 + sd * rng.sample::<f64, _>(StandardNormal)
    }
}

// ---------------------------------------------------------------------------
// chains

/// Acceptance bookkeeping for one block type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BlockAcceptance {
    pub block: String,
    pub proposed: u64,
    pub accepted: u64,
}

impl BlockAcceptance {
    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

/// Posterior summary of one scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

/// Posterior draws of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmChain {
    pub z: u8,
    pub subject_ids: Vec<u64>,
    /// Parameter state after every post-burn-in iteration.
    pub draws: Vec<ArmModel>,
    /// Iteration index of `draws[0]`.
    pub burn_in: usize,
    /// Iteration index of each stored frailty draw.
    pub frailty_iters: Vec<usize>,
    /// Stored frailty draws, one vector (in `subject_ids` order) per entry of
    /// `frailty_iters`.
    pub frailties: Vec<Vec<FrailtySet>>,
    pub acceptance: Vec<BlockAcceptance>,
    pub warnings: Vec<String>,
}

/// Names of the parameters reported for a sampler configuration.
pub fn parameter_names(cfg: &SamplerConfig) -> Vec<String> {
    let mut names = Vec::new();
    for (prefix, block) in [("12", ParamBlock::T12), ("13", ParamBlock::T13), ("23", ParamBlock::T23)] {
        for n in BlockLayout::new(block, cfg).names {
            names.push(match n {
                "kappa12_star" | "kappa13_star" => format!("{n}_23"),
                _ => format!("{n}{prefix}"),
            });
        }
    }
    names
}

/// Value of a named parameter (as produced by [`parameter_names`]).
pub fn parameter_value(arm: &ArmModel, name: &str) -> Option<f64> {
    let (p, field) = if let Some(f) = name.strip_suffix("_23") {
        (&arm.t23, f)
    } else if name.len() > 2 {
        let (f, tr) = name.split_at(name.len() - 2);
        let p = match tr {
            "12" => &arm.t12,
            "13" => &arm.t13,
            "23" => &arm.t23,
            _ => return None,
        };
        (p, f)
    } else {
        return None;
    };
    Some(match field {
        "gamma" => p.gamma,
        "alpha" => p.alpha,
        "theta" => p.theta,
        "kappa" => p.kappa,
        "kappa12_star" => p.kappa12_star,
        "kappa13_star" => p.kappa13_star,
        _ => return None,
    })
}

/// Linear-interpolation sample quantile (type 7).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, sd and equal-tailed 95% interval of a sample.
pub fn summarize(name: &str, values: &[f64]) -> ParamSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    ParamSummary {
        name: name.to_string(),
        mean,
        sd: var.sqrt(),
        q025: quantile(&sorted, 0.025),
        q975: quantile(&sorted, 0.975),
    }
}

impl ArmChain {
    /// Post-burn-in parameter states.
    pub fn retained(&self) -> &[ArmModel] {
        &self.draws
    }

    pub fn summary(&self, cfg: &SamplerConfig) -> Vec<ParamSummary> {
        parameter_names(cfg)
            .iter()
            .map(|name| {
                let v: Vec<f64> = self
                    .retained()
                    .iter()
                    .map(|a| parameter_value(a, name).expect("known parameter"))
                    .collect();
                summarize(name, &v)
            })
            .collect()
    }

    pub fn acceptance_rate(&self, block: &str) -> Option<f64> {
        self.acceptance.iter().find(|a| a.block == block).map(|a| a.rate())
    }

    /// Parameter state at the iteration of stored frailty draw `k`.
    pub fn params_at_frailty_draw(&self, k: usize) -> &ArmModel {
        &self.draws[self.frailty_iters[k] - self.burn_in]
    }
}

/// Peak of the profile of an exponential gap-time model with log-rate
/// `b0 + b1 * t12`, fitted by Newton–Raphson. Returns `b1`, or 0 when the fit
/// is not possible.
fn entry_time_slope(records: &[SubjectRecord]) -> f64 {
    let rows: Vec<(f64, f64, f64)> = records
        .iter()
        .filter(|r| r.s_event)
        .map(|r| (r.s_time, r.t_time - r.s_time, if r.t_event { 1.0 } else { 0.0 }))
        .collect();
    let events: f64 = rows.iter().map(|r| r.2).sum();
    if rows.len() < 3 || events < 2.0 {
        return 0.0;
    }
    let mean_x = rows.iter().map(|r| r.0).sum::<f64>() / rows.len() as f64;
    let sxx: f64 = rows.iter().map(|r| (r.0 - mean_x).powi(2)).sum();
    if sxx <= 1e-12 {
        return 0.0;
    }
    let exposure: f64 = rows.iter().map(|r| r.1).sum();
    if exposure <= 0.0 {
        return 0.0;
    }
    let (mut b0, mut b1) = ((events / exposure).ln(), 0.0);
    for _ in 0..50 {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, g, d) in &rows {
            let xc = x - mean_x;
            let m = g * (b0 + b1 * xc).exp();
            g0 += d - m;
            g1 += xc * (d - m);
            h00 += m;
            h01 += xc * m;
            h11 += xc * xc * m;
        }
        let det = h00 * h11 - h01 * h01;
        if !(det > 0.0) {
            return 0.0;
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;
        b0 += d0;
        b1 += d1;
        if !b1.is_finite() {
            return 0.0;
        }
        if d0.abs() + d1.abs() < 1e-10 {
            break;
        }
    }
    b1.clamp(-5.0, 5.0)
}

fn check_arm(records: &[SubjectRecord], z: u8, cfg: &SamplerConfig) -> Result<()> {
    if records.is_empty() {
        return Err(Error::data(format!("arm {z} has no subjects")));
    }
    if !cfg.allow_all_censored && records.iter().all(|r| !r.s_event && !r.t_event) {
        return Err(Error::data(format!(
            "arm {z}: all {} subjects are censored without any event; nothing to fit",
            records.len()
        )));
    }
    for r in records {
        let zero_event = (r.s_event && r.s_time == 0.0)
            || (!r.s_event && r.t_event && r.t_time == 0.0)
            || (r.s_event && r.t_event && r.t_time == r.s_time);
        if zero_event {
            return Err(Error::data(format!(
                "subject {}: event at zero (gap) time has infinite hazard for shapes below 1",
                r.id
            )));
        }
    }
    Ok(())
}

fn adapt(log_scale: &mut f64, rate: f64, target: f64, iter: usize) {
    *log_scale += (rate - target) / ((iter + 1) as f64).powf(0.6);
    *log_scale = log_scale.clamp(-6.0, 3.0);
}

/// Runs the sampler for the subjects of arm `z`.
pub fn fit_arm(records: &[SubjectRecord], z: u8, sampler: &SamplerConfig, priors: &PriorConfig) -> Result<ArmChain> {
    sampler.validate()?;
    priors.validate()?;
    check_arm(records, z, sampler)?;
    let shared = sampler.shared_death();
    let prior = FrailtyPrior::new(&sampler.frailty, priors.frailty_prior_sd, z as usize)?;
    let variant = sampler.variant;

    let mut arm = ArmModel::exponential(1.0, 1.0, 1.0);
    arm.variant = variant;
    if variant == ModelVariant::A {
        arm.t23.theta = entry_time_slope(records);
    } else {
        arm.t23.kappa12_star = 0.0;
        arm.t23.kappa13_star = 1.0;
    }
    let n = records.len();
    let mut w = vec![FrailtySet::zero(); n];

    let layouts = [ParamBlock::T12, ParamBlock::T13, ParamBlock::T23].map(|b| BlockLayout::new(b, sampler));
    let mut acc: Vec<BlockAcceptance> = ["omega12", "params12", "omega13", "params13", "omega23", "params23"]
        .iter()
        .map(|b| BlockAcceptance {
            block: b.to_string(),
            ..Default::default()
        })
        .collect();
    // log proposal scale multipliers, adapted during burn-in when requested
    let mut log_scale = [0.0f64; 6];

    let mut draws = Vec::with_capacity(sampler.iterations - sampler.burn_in);
    let mut frailty_iters = Vec::new();
    let mut frailties = Vec::new();
    let uses_w12_in_23 = variant == ModelVariant::B;
    let uses_w13_in_23 = shared || variant == ModelVariant::B;

    for iter in 0..sampler.iterations {
        let mut rng: StreamRng = substream(sampler.seed, tag::SAMPLER, iter as u64, z as u64);
        let before: Vec<u64> = acc.iter().map(|a| a.accepted).collect();
        let sd_w = |k: usize| sampler.proposal_sd_frailty * log_scale[k].exp();
        let sd_p = |k: usize| sampler.proposal_sd_params * log_scale[k].exp();

        // ω12 per subject
        let sd = sd_w(0);
        for (r, wi) in records.iter().zip(w.iter_mut()) {
            let target = |cand: &FrailtySet| {
                let mut v = term12(r, &arm, cand) + prior.log_density(cand, r.s_event);
                if uses_w12_in_23 {
                    v += term23(r, &arm, cand);
                }
                v
            };
            let cur = target(wi);
            let mut cand = *wi;
            cand.omega12 += sd * rng.sample::<f64, _>(StandardNormal);
            let accepted = mh_accept(cur, target(&cand), &mut rng);
            if accepted {
                *wi = cand;
            }
            acc[0].proposed += 1;
            acc[0].accepted += u64::from(accepted);
        }

        // structural blocks are interleaved with the frailty blocks
        let update_block = |bi: usize, ai: usize, arm: &mut ArmModel, w: &[FrailtySet], rng: &mut StreamRng, acc: &mut Vec<BlockAcceptance>| {
            let layout = &layouts[bi];
            let current = layout.get(arm);
            let cur_lp = log_posterior_block(layout.block, arm, records, w, priors, sampler);
            let mut trial = *arm;
            let out = mh_update(
                &current,
                cur_lp,
                sd_p(ai),
                |vals| {
                    layout.set(&mut trial, vals);
                    log_posterior_block(layout.block, &trial, records, w, priors, sampler)
                },
                rng,
            );
            layout.set(arm, &out.values);
            acc[ai].proposed += 1;
            acc[ai].accepted += u64::from(out.accepted);
        };

        update_block(0, 1, &mut arm, &w, &mut rng, &mut acc);

        // ω13 per subject (covers ω23 when tied)
        let sd = sd_w(2);
        for (r, wi) in records.iter().zip(w.iter_mut()) {
            let target = |cand: &FrailtySet| {
                let mut v = term13(r, &arm, cand) + prior.log_density(cand, r.s_event);
                if uses_w13_in_23 {
                    v += term23(r, &arm, cand);
                }
                v
            };
            let cur = target(wi);
            let mut cand = *wi;
            cand.omega13 += sd * rng.sample::<f64, _>(StandardNormal);
            if shared {
                cand.omega23 = cand.omega13;
            }
            let accepted = mh_accept(cur, target(&cand), &mut rng);
            if accepted {
                *wi = cand;
            }
            acc[2].proposed += 1;
            acc[2].accepted += u64::from(accepted);
        }

        update_block(1, 3, &mut arm, &w, &mut rng, &mut acc);

        // ω23: Metropolis for subjects with S, conditional prior draw otherwise
        if !shared {
            let sd = sd_w(4);
            for (r, wi) in records.iter().zip(w.iter_mut()) {
                if !r.s_event {
                    wi.omega23 = prior.draw_w23(wi, &mut rng);
                    continue;
                }
                let target = |cand: &FrailtySet| term23(r, &arm, cand) + prior.log_density(cand, true);
                let cur = target(wi);
                let mut cand = *wi;
                cand.omega23 += sd * rng.sample::<f64, _>(StandardNormal);
                let accepted = mh_accept(cur, target(&cand), &mut rng);
                if accepted {
                    *wi = cand;
                }
                acc[4].proposed += 1;
                acc[4].accepted += u64::from(accepted);
            }
        }

        update_block(2, 5, &mut arm, &w, &mut rng, &mut acc);

        if sampler.adapt_during_burn_in && iter < sampler.burn_in {
            for k in 0..6 {
                let attempts = match k {
                    0 | 2 => n as u64,
                    4 => records.iter().filter(|r| r.s_event).count() as u64,
                    _ => 1,
                };
                if attempts == 0 {
                    continue;
                }
                let rate = (acc[k].accepted - before[k]) as f64 / attempts as f64;
                let target = if k % 2 == 0 { 0.44 } else { 0.3 };
                adapt(&mut log_scale[k], rate, target, iter);
            }
        }

        if iter >= sampler.burn_in {
            draws.push(arm);
        }
        if iter >= sampler.burn_in && (iter - sampler.burn_in) % sampler.frailty_thin == 0 {
            frailty_iters.push(iter);
            frailties.push(w.clone());
        }
    }

    let mut warnings = Vec::new();
    for a in &acc {
        if a.proposed == 0 {
            continue;
        }
        let rate = a.rate();
        if a.block.starts_with("params") && !(rate > 0.05 && rate < 0.95) {
            let msg = format!(
                "arm {z}: acceptance rate {rate:.3} for block {} is outside (0.05, 0.95); consider retuning the proposal sd",
                a.block
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let counts = transition_counts(records);
    for (name, c) in ["1->2", "1->3", "2->3"].iter().zip(counts) {
        if c == 0 {
            let msg = format!("arm {z}: no observed {name} transitions; that block is driven by its prior");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    Ok(ArmChain {
        z,
        subject_ids: records.iter().map(|r| r.id).collect(),
        draws,
        burn_in: sampler.burn_in,
        frailty_iters,
        frailties,
        acceptance: acc.into_iter().filter(|a| a.proposed > 0).collect(),
        warnings,
    })
}

fn transition_counts(records: &[SubjectRecord]) -> [usize; 3] {
    let mut c = [0usize; 3];
    for r in records {
        if r.s_event {
            c[0] += 1;
            if r.t_event {
                c[2] += 1;
            }
        } else if r.t_event {
            c[1] += 1;
        }
    }
    c
}

/// Posterior draws for both arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDraws {
    pub sampler: SamplerConfig,
    pub priors: PriorConfig,
    /// Index 0 is the control arm, 1 the treated arm.
    pub arms: [ArmChain; 2],
}

/// JSON-friendly summary of a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub burn_in: usize,
    pub arms: Vec<ArmFitSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmFitSummary {
    pub z: u8,
    pub subjects: usize,
    pub transitions: [usize; 3],
    pub parameters: Vec<ParamSummary>,
    pub acceptance: Vec<AcceptanceRate>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRate {
    pub block: String,
    pub rate: f64,
}

impl ChainDraws {
    pub fn summary(&self, dataset: &Dataset) -> FitSummary {
        FitSummary {
            iterations: self.sampler.iterations,
            burn_in: self.sampler.burn_in,
            arms: self
                .arms
                .iter()
                .map(|a| ArmFitSummary {
                    z: a.z,
                    subjects: a.subject_ids.len(),
                    transitions: transition_counts(&dataset.arm(a.z)),
                    parameters: a.summary(&self.sampler),
                    acceptance: a
                        .acceptance
                        .iter()
                        .map(|b| AcceptanceRate {
                            block: b.block.clone(),
                            rate: b.rate(),
                        })
                        .collect(),
                    warnings: a.warnings.clone(),
                })
                .collect(),
        }
    }

    /// Posterior mean of a named parameter in arm `z`.
    pub fn posterior_mean(&self, z: u8, name: &str) -> Option<f64> {
        let arm = &self.arms[z as usize];
        let v: Option<Vec<f64>> = arm.retained().iter().map(|a| parameter_value(a, name)).collect();
        let v = v?;
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Bookkeeping stored next to the chain CSV files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChainMeta {
    sampler: SamplerConfig,
    priors: PriorConfig,
    arms: Vec<ArmMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArmMeta {
    z: u8,
    subject_ids: Vec<u64>,
    burn_in: usize,
    frailty_iters: Vec<usize>,
    acceptance: Vec<BlockAcceptance>,
    warnings: Vec<String>,
}

/// One row of the parameter CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct ParamRow {
    z: u8,
    iter: usize,
    gamma12: f64,
    alpha12: f64,
    kappa12: f64,
    gamma13: f64,
    alpha13: f64,
    kappa13: f64,
    gamma23: f64,
    alpha23: f64,
    kappa23: f64,
    theta23: f64,
    kappa12_star_23: f64,
    kappa13_star_23: f64,
}

impl ParamRow {
    fn new(z: u8, iter: usize, a: &ArmModel) -> Self {
        Self {
            z,
            iter,
            gamma12: a.t12.gamma,
            alpha12: a.t12.alpha,
            kappa12: a.t12.kappa,
            gamma13: a.t13.gamma,
            alpha13: a.t13.alpha,
            kappa13: a.t13.kappa,
            gamma23: a.t23.gamma,
            alpha23: a.t23.alpha,
            kappa23: a.t23.kappa,
            theta23: a.t23.theta,
            kappa12_star_23: a.t23.kappa12_star,
            kappa13_star_23: a.t23.kappa13_star,
        }
    }

    fn arm(&self, variant: ModelVariant) -> ArmModel {
        let tp = |gamma, alpha, kappa| TransitionParams {
            gamma,
            alpha,
            kappa,
            ..TransitionParams::default()
        };
        ArmModel {
            t12: tp(self.gamma12, self.alpha12, self.kappa12),
            t13: tp(self.gamma13, self.alpha13, self.kappa13),
            t23: TransitionParams {
                theta: self.theta23,
                kappa12_star: self.kappa12_star_23,
                kappa13_star: self.kappa13_star_23,
                ..tp(self.gamma23, self.alpha23, self.kappa23)
            },
            variant,
        }
    }
}

/// File names used by [`ChainDraws::save_dir`].
pub const CHAIN_PARAMS_FILE: &str = "chain_params.csv";
pub const CHAIN_META_FILE: &str = "chain_meta.json";
pub const FIT_SUMMARY_FILE: &str = "fit_summary.json";

/// Name of the frailty matrix file of arm `z`.
pub fn frailty_matrix_file(z: u8) -> String {
    format!("frailty_z{z}.csv")
}

impl ChainDraws {
    /// Writes the parameter CSV (one row per retained iteration and arm), one
    /// frailty matrix per arm (one row per stored iteration, three columns per
    /// subject) and the sampler bookkeeping.
    pub fn save_dir(&self, dir: impl AsRef<std::path::Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.write_params_csv(std::io::BufWriter::new(std::fs::File::create(dir.join(CHAIN_PARAMS_FILE))?))?;
        for arm in &self.arms {
            let file = std::fs::File::create(dir.join(frailty_matrix_file(arm.z)))?;
            arm.write_frailty_csv(std::io::BufWriter::new(file))?;
        }
        let meta = ChainMeta {
            sampler: self.sampler,
            priors: self.priors,
            arms: self
                .arms
                .iter()
                .map(|a| ArmMeta {
                    z: a.z,
                    subject_ids: a.subject_ids.clone(),
                    burn_in: a.burn_in,
                    frailty_iters: a.frailty_iters.clone(),
                    acceptance: a.acceptance.clone(),
                    warnings: a.warnings.clone(),
                })
                .collect(),
        };
        std::fs::write(dir.join(CHAIN_META_FILE), serde_json::to_string_pretty(&meta)? + "\n")?;
        Ok(())
    }

    /// Reads a chain written by [`ChainDraws::save_dir`].
    pub fn load_dir(dir: impl AsRef<std::path::Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let meta: ChainMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(CHAIN_META_FILE))?)?;
        if meta.arms.len() != 2 {
            return Err(Error::data(format!("chain metadata lists {} arms, expected 2", meta.arms.len())));
        }
        let mut params: [Vec<ArmModel>; 2] = [Vec::new(), Vec::new()];
        let mut rdr = csv::Reader::from_path(dir.join(CHAIN_PARAMS_FILE))?;
        for row in rdr.deserialize::<ParamRow>() {
            let row = row?;
            if row.z > 1 {
                return Err(Error::data(format!("chain row with arm {}", row.z)));
            }
            params[row.z as usize].push(row.arm(meta.sampler.variant));
        }
        let mut arms = Vec::with_capacity(2);
        for (m, draws) in meta.arms.into_iter().zip(params) {
            let file = std::fs::File::open(dir.join(frailty_matrix_file(m.z)))?;
            let frailties = read_frailty_csv(std::io::BufReader::new(file), &m.subject_ids, &m.frailty_iters)?;
            if let Some(&last) = m.frailty_iters.last() {
                if last < m.burn_in || last - m.burn_in >= draws.len() {
                    return Err(Error::data(format!("arm {}: frailty iterations exceed the parameter rows", m.z)));
                }
            }
            arms.push(ArmChain {
                z: m.z,
                subject_ids: m.subject_ids,
                draws,
                burn_in: m.burn_in,
                frailty_iters: m.frailty_iters,
                frailties,
                acceptance: m.acceptance,
                warnings: m.warnings,
            });
        }
        let arms: [ArmChain; 2] = arms.try_into().expect("two arms");
        if arms[0].z != 0 || arms[1].z != 1 {
            return Err(Error::data("chain metadata must list arm 0 then arm 1"));
        }
        Ok(Self {
            sampler: meta.sampler,
            priors: meta.priors,
            arms,
        })
    }

    pub fn write_params_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for arm in &self.arms {
            for (k, a) in arm.draws.iter().enumerate() {
                wtr.serialize(ParamRow::new(arm.z, arm.burn_in + k, a))?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

impl ArmChain {
    pub fn write_frailty_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["iter".to_string()];
        for id in &self.subject_ids {
            header.push(format!("omega12_{id}"));
            header.push(format!("omega13_{id}"));
            header.push(format!("omega23_{id}"));
        }
        wtr.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for (iter, ws) in self.frailty_iters.iter().zip(&self.frailties) {
            row.clear();
            row.push(iter.to_string());
            for w in ws {
                row.push(w.omega12.to_string());
                row.push(w.omega13.to_string());
                row.push(w.omega23.to_string());
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn read_frailty_csv<R: std::io::Read>(reader: R, ids: &[u64], iters: &[usize]) -> Result<Vec<Vec<FrailtySet>>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.len() != 1 + 3 * ids.len() {
        return Err(Error::data(format!(
            "frailty matrix has {} columns, expected {} for {} subjects",
            header.len(),
            1 + 3 * ids.len(),
            ids.len()
        )));
    }
    let mut out = Vec::with_capacity(iters.len());
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::data(format!("frailty matrix row {}: column {}: {e}", line + 2, i + 1)))
        };
        let iter: usize = rec[0]
            .parse()
            .map_err(|e| Error::data(format!("frailty matrix row {}: {e}", line + 2)))?;
        if iters.get(line) != Some(&iter) {
            return Err(Error::data(format!("frailty matrix row {} has unexpected iteration {iter}", line + 2)));
        }
        let ws = (0..ids.len())
            .map(|k| Ok(FrailtySet::new(num(1 + 3 * k)?, num(2 + 3 * k)?, num(3 + 3 * k)?)))
            .collect::<Result<Vec<_>>>()?;
        out.push(ws);
    }
    if out.len() != iters.len() {
        return Err(Error::data(format!(
            "frailty matrix has {} rows, expected {}",
            out.len(),
            iters.len()
        )));
    }
    Ok(out)
}

/// Fits both arms separately; each arm draws from its own substreams.
pub fn fit(dataset: &Dataset, sampler: &SamplerConfig, priors: &PriorConfig) -> Result<ChainDraws> {
    let control = dataset.arm(0);
    let treated = dataset.arm(1);
    let arms = [fit_arm(&control, 0, sampler, priors)?, fit_arm(&treated, 1, sampler, priors)?];
    Ok(ChainDraws {
        sampler: *sampler,
        priors: *priors,
        arms,
    })
}
