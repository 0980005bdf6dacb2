//! Weibull transition hazards for the counterfactual illness-death frailty model.
//!
//! States are 1 (baseline), 2 (surrogate event S) and 3 (death, T). Every
//! transition has cumulative baseline hazard `gamma * t^alpha` multiplied by a
//! frailty link `exp(kappa * omega)`. The 2→3 transition runs on a clock reset
//! at the time of S and carries a variant-specific link: model A adds a
//! coefficient on the entry time, model B links both earlier frailties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::Quadrature;

/// Parameters of one transition in one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransitionParams {
    /// Weibull shape.
    pub alpha: f64,
    /// Weibull scale (multiplier of `t^alpha` in the cumulative hazard).
    pub gamma: f64,
    /// Frailty coefficient.
    pub kappa: f64,
    /// Entry-time coefficient; only read on the 2→3 transition of model A.
    pub theta: f64,
    /// Coefficient on the 1→2 frailty; only read on the 2→3 transition of model B.
    pub kappa12_star: f64,
    /// Coefficient on the 1→3 frailty; only read on the 2→3 transition of model B.
    pub kappa13_star: f64,
}

impl Default for TransitionParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            gamma: 1.0,
            kappa: 1.0,
            theta: 0.0,
            kappa12_star: 0.0,
            kappa13_star: 1.0,
        }
    }
}

impl TransitionParams {
    /// Exponential transition with the given rate.
    pub fn exponential(rate: f64) -> Self {
        Self {
            gamma: rate,
            ..Self::default()
        }
    }

    pub fn weibull(gamma: f64, alpha: f64) -> Self {
        Self {
            gamma,
            alpha,
            ..Self::default()
        }
    }

    /// Checks positivity. `gamma == 0` is accepted only when `allow_zero_scale`
    /// is set, which evaluation code uses for limit cases.
    pub fn validate(&self, allow_zero_scale: bool) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::domain(format!("shape must be positive, got {}", self.alpha)));
        }
        let gamma_ok = if allow_zero_scale {
            self.gamma >= 0.0
        } else {
            self.gamma > 0.0
        };
        if !gamma_ok || !self.gamma.is_finite() {
            return Err(Error::domain(format!("scale must be positive, got {}", self.gamma)));
        }
        for (name, v) in [
            ("kappa", self.kappa),
            ("theta", self.theta),
            ("kappa12_star", self.kappa12_star),
            ("kappa13_star", self.kappa13_star),
        ] {
            if !v.is_finite() {
                return Err(Error::domain(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// `gamma * exp(kappa * omega)`: the multiplier of `t^alpha`.
    #[inline]
    pub fn scale_with_frailty(&self, omega: f64) -> f64 {
        self.gamma * (self.kappa * omega).exp()
    }
}

/// Which 2→3 link is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ModelVariant {
    /// Entry time `T12` as a covariate: `exp(kappa23 * omega23 + theta23 * T12)`.
    #[default]
    A,
    /// Two frailties: `exp(kappa12* * omega12 + kappa13* * omega13)`.
    B,
}

/// The three transitions of one treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmModel {
    pub t12: TransitionParams,
    pub t13: TransitionParams,
    pub t23: TransitionParams,
    #[serde(default)]
    pub variant: ModelVariant,
}

impl ArmModel {
    /// Model-A arm with exponential baselines and unit frailty coefficients.
    pub fn exponential(g12: f64, g13: f64, g23: f64) -> Self {
        Self {
            t12: TransitionParams::exponential(g12),
            t13: TransitionParams::exponential(g13),
            t23: TransitionParams::exponential(g23),
            variant: ModelVariant::A,
        }
    }

    pub fn validate(&self, allow_zero_scale: bool) -> Result<()> {
        self.t12.validate(allow_zero_scale)?;
        self.t13.validate(allow_zero_scale)?;
        self.t23.validate(allow_zero_scale)
    }

    /// Log-scale 2→3 link for a subject who entered S at `t12`.
    #[inline]
    pub fn link23(&self, frailty: &FrailtySet, t12: f64) -> f64 {
        match self.variant {
            ModelVariant::A => self.t23.kappa * frailty.omega23 + self.t23.theta * t12,
            ModelVariant::B => {
                self.t23.kappa12_star * frailty.omega12 + self.t23.kappa13_star * frailty.omega13
            }
        }
    }
}

/// Frailties of one subject in one arm.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrailtySet {
    pub omega12: f64,
    pub omega13: f64,
    pub omega23: f64,
}

impl FrailtySet {
    pub fn new(omega12: f64, omega13: f64, omega23: f64) -> Self {
        Self { omega12, omega13, omega23 }
    }

    /// Both transitions into death share one frailty.
    pub fn shared_death(omega12: f64, omega13: f64) -> Self {
        Self {
            omega12,
            omega13,
            omega23: omega13,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }
}

#[inline]
pub(crate) fn pow_shape(t: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        t
    } else {
        t.powf(alpha)
    }
}

fn check_time(t: f64, what: &str) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{what} must be a finite non-negative time, got {t}")))
    }
}

/// Cumulative hazard `gamma * t^alpha * exp(kappa * omega)`.
pub fn cum_hazard(params: &TransitionParams, omega: f64, t: f64) -> Result<f64> {
    params.validate(true)?;
    check_time(t, "t")?;
    Ok(params.scale_with_frailty(omega) * pow_shape(t, params.alpha))
}

/// Instantaneous hazard `gamma * alpha * t^(alpha-1) * exp(kappa * omega)`.
pub fn hazard(params: &TransitionParams, omega: f64, t: f64) -> Result<f64> {
    params.validate(true)?;
    check_time(t, "t")?;
    Ok(params.scale_with_frailty(omega) * params.alpha * pow_shape(t, params.alpha - 1.0))
}

/// 2→3 hazard at calendar time `t` for a subject who entered S at `t12`.
/// Zero up to and including `t12`.
pub fn hazard_23(arm: &ArmModel, frailty: &FrailtySet, t: f64, t12: f64) -> Result<f64> {
    arm.t23.validate(true)?;
    check_time(t, "t")?;
    check_time(t12, "t12")?;
    if t <= t12 {
        return Ok(0.0);
    }
    let p = &arm.t23;
    Ok(p.gamma * p.alpha * pow_shape(t - t12, p.alpha - 1.0) * arm.link23(frailty, t12).exp())
}

/// 2→3 cumulative hazard accumulated between `t12` and calendar time `t`.
pub fn cum_hazard_23(arm: &ArmModel, frailty: &FrailtySet, t: f64, t12: f64) -> Result<f64> {
    arm.t23.validate(true)?;
    check_time(t, "t")?;
    check_time(t12, "t12")?;
    if t <= t12 {
        return Ok(0.0);
    }
    let p = &arm.t23;
    Ok(p.gamma * pow_shape(t - t12, p.alpha) * arm.link23(frailty, t12).exp())
}

/// Subject-level constants of one arm, precomputed for repeated evaluation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SubjectHazards {
    a12: f64,
    c12: f64,
    a13: f64,
    c13: f64,
    a23: f64,
    /// `gamma23 * exp(link)` without the entry-time part.
    c23: f64,
    /// Entry-time coefficient (zero under model B).
    theta: f64,
}

impl SubjectHazards {
    pub(crate) fn new(arm: &ArmModel, frailty: &FrailtySet) -> Self {
        let (c23, theta) = match arm.variant {
            ModelVariant::A => (
                arm.t23.gamma * (arm.t23.kappa * frailty.omega23).exp(),
                arm.t23.theta,
            ),
            ModelVariant::B => (arm.t23.gamma * arm.link23(frailty, 0.0).exp(), 0.0),
        };
        Self {
            a12: arm.t12.alpha,
            c12: arm.t12.scale_with_frailty(frailty.omega12),
            a13: arm.t13.alpha,
            c13: arm.t13.scale_with_frailty(frailty.omega13),
            a23: arm.t23.alpha,
            c23,
            theta,
        }
    }

    /// Overall survival `P(T > tau)`.
    pub(crate) fn survival(&self, tau: f64, quad: &Quadrature) -> Result<f64> {
        let l12_tau = self.c12 * pow_shape(tau, self.a12);
        let stay = (-l12_tau - self.c13 * pow_shape(tau, self.a13)).exp();
        if self.c12 == 0.0 {
            return Ok(stay);
        }
        let gap_survival = |u: f64| {
            let c23 = if self.theta == 0.0 {
                self.c23
            } else {
                self.c23 * (self.theta * u).exp()
            };
            (-c23 * pow_shape((tau - u).max(0.0), self.a23)).exp()
        };
        let through_s = if self.a12 < 1.0 {
            // u = tau * v^(1/a12) makes the 1→2 cumulative hazard linear in v,
            // which removes the u^(a12-1) endpoint singularity.
            let inv = 1.0 / self.a12;
            quad.integrate(0.0, 1.0, |v| {
                let u = tau * v.powf(inv);
                l12_tau * (-l12_tau * v - self.c13 * pow_shape(u, self.a13)).exp() * gap_survival(u)
            })?
        } else {
            quad.integrate(0.0, tau, |u| {
                let h12 = self.c12 * self.a12 * pow_shape(u, self.a12 - 1.0);
                h12 * (-self.c12 * pow_shape(u, self.a12) - self.c13 * pow_shape(u, self.a13)).exp()
                    * gap_survival(u)
            })?
        };
        Ok((stay + through_s).clamp(0.0, 1.0))
    }
}

/// Overall survival `P(T > tau)` of one subject in one arm: survive without S,
/// or reach S at some `u <= tau` and survive the 2→3 gap `tau - u`.
pub fn survival_prob(
    arm: &ArmModel,
    frailty: &FrailtySet,
    tau: f64,
    quad: &Quadrature,
) -> Result<f64> {
    arm.validate(true)?;
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    SubjectHazards::new(arm, frailty).survival(tau, quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn quad() -> Quadrature {
        Quadrature::default()
    }

    #[test]
    fn cum_hazard_examples() {
        let p = TransitionParams::weibull(1.0, 1.0);
        assert_relative_eq!(cum_hazard(&p, 0.0, 2.0).unwrap(), 2.0);
        let p = TransitionParams::weibull(2.0, 0.5);
        assert_relative_eq!(cum_hazard(&p, 0.0, 4.0).unwrap(), 4.0);
        let p = TransitionParams::weibull(0.5, 1.0);
        assert_relative_eq!(cum_hazard(&p, 0.4, 1.0).unwrap(), 0.745912348, epsilon = 1e-8);
        assert_eq!(cum_hazard(&p, 0.4, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn cum_hazard_rejects_bad_input() {
        let p = TransitionParams::weibull(1.0, 1.0);
        assert!(cum_hazard(&p, 0.0, -1.0).is_err());
        let bad = TransitionParams::weibull(1.0, -1.0);
        assert!(cum_hazard(&bad, 0.0, 1.0).is_err());
        let bad = TransitionParams::weibull(-0.5, 1.0);
        assert!(cum_hazard(&bad, 0.0, 1.0).is_err());
    }

    #[test]
    fn hazard_23_examples() {
        let arm = ArmModel::exponential(1.0, 1.0, 1.0);
        let w = FrailtySet::zero();
        assert_relative_eq!(hazard_23(&arm, &w, 3.0, 1.0).unwrap(), 1.0);
        assert_eq!(hazard_23(&arm, &w, 0.5, 1.0).unwrap(), 0.0);

        let mut arm = arm;
        arm.t23 = TransitionParams {
            alpha: 2.0,
            theta: 0.5,
            ..TransitionParams::exponential(1.0)
        };
        let expected = 2.0 * 1.0 * 0.5f64.exp();
        assert_relative_eq!(hazard_23(&arm, &w, 2.0, 1.0).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(expected, 3.29744, epsilon = 1e-5);
        // central difference of the cumulative hazard
        let h = 1e-6;
        let fd = (cum_hazard_23(&arm, &w, 2.0 + h, 1.0).unwrap()
            - cum_hazard_23(&arm, &w, 2.0 - h, 1.0).unwrap())
            / (2.0 * h);
        assert_relative_eq!(fd, expected, epsilon = 1e-6);
        assert!(hazard_23(&arm, &w, -1.0, 0.0).is_err());
        assert!(hazard_23(&arm, &w, 1.0, -0.5).is_err());
    }

    #[test]
    fn model_b_link_uses_both_frailties() {
        let mut arm = ArmModel::exponential(1.0, 1.0, 2.0);
        arm.variant = ModelVariant::B;
        arm.t23.kappa12_star = 0.5;
        arm.t23.kappa13_star = 2.0;
        let w = FrailtySet::new(0.2, -0.1, 99.0);
        let expected = 2.0 * (0.5 * 0.2 - 2.0 * 0.1f64).exp();
        assert_relative_eq!(hazard_23(&arm, &w, 3.0, 1.0).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn survival_unit_exponential_is_exp_minus_tau() {
        let arm = ArmModel::exponential(1.0, 1.0, 1.0);
        let s = survival_prob(&arm, &FrailtySet::zero(), 5.0, &quad()).unwrap();
        assert_relative_eq!(s, (-5.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn survival_without_illness_path() {
        let mut arm = ArmModel::exponential(0.0, 0.5, 1.0);
        arm.t12.gamma = 0.0;
        let s = survival_prob(&arm, &FrailtySet::zero(), 2.0, &quad()).unwrap();
        assert_relative_eq!(s, (-1.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn survival_scenario2_control_closed_form() {
        // a = 1, b = 0.5, c = 1: stay + a e^{-c tau} (1 - e^{-(a+b-c) tau}) / (a+b-c)
        let arm = ArmModel::exponential(1.0, 0.5, 1.0);
        let tau: f64 = 5.0;
        let expected = (-1.5 * tau).exp() + (-tau).exp() * (1.0 - (-0.5 * tau).exp()) / 0.5;
        let s = survival_prob(&arm, &FrailtySet::zero(), tau, &quad()).unwrap();
        assert_relative_eq!(s, expected, epsilon = 1e-13);
    }

    #[test]
    fn small_shape_uses_substitution_accurately() {
        let mut arm = ArmModel::exponential(1.0, 0.5, 1.0);
        arm.t12.alpha = 0.4;
        let s64 = survival_prob(&arm, &FrailtySet::zero(), 3.0, &quad()).unwrap();
        let fine = Quadrature::new(&crate::quadrature::QuadratureConfig {
            nodes: 400,
            error_tolerance: None,
        })
        .unwrap();
        let s400 = survival_prob(&arm, &FrailtySet::zero(), 3.0, &fine).unwrap();
        assert_relative_eq!(s64, s400, epsilon = 1e-10);
    }

    #[test]
    fn survival_rejects_nonpositive_tau() {
        let arm = ArmModel::exponential(1.0, 1.0, 1.0);
        assert!(survival_prob(&arm, &FrailtySet::zero(), 0.0, &quad()).is_err());
    }

    fn transition() -> impl Strategy<Value = TransitionParams> {
        (0.05f64..3.0, 0.3f64..2.5, 0.1f64..2.0).prop_map(|(gamma, alpha, kappa)| TransitionParams {
            gamma,
            alpha,
            kappa,
            ..TransitionParams::default()
        })
    }

    fn arm_a() -> impl Strategy<Value = ArmModel> {
        (transition(), transition(), transition(), -0.5f64..0.5).prop_map(|(t12, t13, mut t23, th)| {
            t23.theta = th;
            ArmModel {
                t12,
                t13,
                t23,
                variant: ModelVariant::A,
            }
        })
    }

    proptest! {
        #[test]
        fn cum_hazard_is_integral_of_hazard(p in transition(), omega in -1.0f64..1.0, t in 0.1f64..5.0) {
            // substitution s = u^alpha makes the hazard integral exact-friendly
            let rule = GaussLegendre::new(64).unwrap();
            let ta = t.powf(p.alpha);
            let integral = rule.integrate(0.0, ta, |s| {
                let u = s.powf(1.0 / p.alpha);
                let du_ds = u.powf(1.0 - p.alpha) / p.alpha;
                hazard(&p, omega, u).unwrap() * du_ds
            });
            let exact = cum_hazard(&p, omega, t).unwrap();
            prop_assert!(((integral - exact) / exact).abs() < 1e-8);
        }

        #[test]
        fn survival_bounded_and_nonincreasing(arm in arm_a(), w12 in -0.8f64..0.8, w13 in -0.8f64..0.8, tau in 0.1f64..6.0) {
            let w = FrailtySet::shared_death(w12, w13);
            let q = quad();
            let s1 = survival_prob(&arm, &w, tau, &q).unwrap();
            let s2 = survival_prob(&arm, &w, tau * 1.3, &q).unwrap();
            prop_assert!((0.0..=1.0).contains(&s1));
            prop_assert!(s2 <= s1 + 1e-12);
        }

        #[test]
        fn survival_decreases_in_death_frailty(arm in arm_a(), w12 in -0.8f64..0.8, w13 in -0.8f64..0.8, tau in 0.2f64..4.0) {
            let q = quad();
            let lo = survival_prob(&arm, &FrailtySet::shared_death(w12, w13), tau, &q).unwrap();
            let hi = survival_prob(&arm, &FrailtySet::shared_death(w12, w13 + 0.3), tau, &q).unwrap();
            prop_assert!(hi < lo || (lo < 1e-300));
        }

        #[test]
        fn models_a_and_b_coincide_under_reduction(arm in arm_a(), w12 in -0.8f64..0.8, w13 in -0.8f64..0.8, tau in 0.2f64..6.0) {
            let mut a = arm;
            a.t23.theta = 0.0;
            let mut b = a;
            b.variant = ModelVariant::B;
            b.t23.kappa12_star = 0.0;
            b.t23.kappa13_star = a.t23.kappa;
            let w = FrailtySet::shared_death(w12, w13);
            let q = quad();
            let sa = survival_prob(&a, &w, tau, &q).unwrap();
            let sb = survival_prob(&b, &w, tau, &q).unwrap();
            prop_assert!((sa - sb).abs() < 1e-10);
        }
    }
}
