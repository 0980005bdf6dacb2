//! Causal surrogate-endpoint validation for two time-to-event outcomes.
//!
//! The crate models a randomized trial as a pair of counterfactual
//! illness-death processes (baseline → S → death, baseline → death) linked by
//! normal frailties, and provides:
//!
//! - exact hazard, cumulative-hazard and overall-survival evaluation ([`model`]);
//! - simulation of replicated trials under preset or custom scenarios ([`simulate`]);
//! - a per-arm block Metropolis–Hastings sampler on the observed-data
//!   likelihood ([`inference`]);
//! - causal effect predictiveness (CEP) curves from fitted chains or from
//!   generating parameters, with sensitivity sweeps ([`cep`]);
//! - conventional Weibull proportional-hazards surrogacy checks ([`prentice`]).

pub mod cep;
pub mod data;
pub mod error;
pub mod frailty;
pub mod inference;
pub mod model;
pub mod prentice;
pub mod quadrature;
pub mod rng;
pub mod simulate;

pub use data::{Dataset, ObservedCase, SubjectRecord};
pub use error::{Error, Result};
pub use frailty::{FrailtyConfig, FrailtyStructure, FullCorrelation};
pub use model::{ArmModel, FrailtySet, ModelVariant, TransitionParams};
pub use quadrature::{Quadrature, QuadratureConfig};
pub use simulate::{CensoringConfig, ScenarioSpec};
