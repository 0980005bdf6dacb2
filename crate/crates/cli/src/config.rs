//! Run configuration: one TOML file per run, overridable by flags.

use std::path::{Path, PathBuf};

use idcep::cep::{CepConfig, SweepGrid};
use idcep::inference::{PriorConfig, SamplerConfig};
use idcep::prentice::OptimConfig;
use idcep::{ArmModel, CensoringConfig, FrailtyConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Everything a subcommand may read. Every section is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand this file was written for; informational only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    pub seed: u64,
    pub paths: PathsConfig,
    pub scenario: ScenarioSection,
    /// Explicit arm parameters; replaces the scenario preset when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arms: Option<ArmsSection>,
    pub censoring: CensoringSection,
    pub sampler: SamplerConfig,
    pub prior: PriorConfig,
    pub cep: CepConfig,
    pub truth: TruthSection,
    pub sweep: SweepGrid,
    pub prentice: OptimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 0,
            paths: PathsConfig::default(),
            scenario: ScenarioSection::default(),
            arms: None,
            censoring: CensoringSection::default(),
            sampler: SamplerConfig::default(),
            prior: PriorConfig::default(),
            cep: CepConfig::default(),
            truth: TruthSection::default(),
            sweep: SweepGrid::default(),
            prentice: OptimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Observed-data CSV (input of fit/cep/prentice, output of simulate).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    /// Chain directory (output of fit, input of cep/sweep).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chain: Option<PathBuf>,
    /// Primary output file of the subcommand.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
    /// Complete (counterfactual) data export of simulate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complete: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub id: u8,
    pub n: usize,
    pub frailty: FrailtyConfig,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            id: 2,
            n: 600,
            frailty: FrailtyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmsSection {
    pub control: ArmModel,
    pub treated: ArmModel,
}

/// Censoring as written in the file; `admin_time = inf` disables
/// administrative censoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CensoringSection {
    pub admin_time: f64,
    pub random_rate: f64,
}

impl Default for CensoringSection {
    fn default() -> Self {
        Self::from(CensoringConfig::default())
    }
}

impl From<CensoringConfig> for CensoringSection {
    fn from(c: CensoringConfig) -> Self {
        Self {
            admin_time: c.admin_time.unwrap_or(f64::INFINITY),
            random_rate: c.random_rate,
        }
    }
}

impl From<CensoringSection> for CensoringConfig {
    fn from(c: CensoringSection) -> Self {
        Self {
            admin_time: c.admin_time.is_finite().then_some(c.admin_time),
            random_rate: c.random_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthSection {
    pub n_draws: usize,
    /// Largest cloud written to the result.
    pub max_points: usize,
}

impl Default for TruthSection {
    fn default() -> Self {
        Self {
            n_draws: 200_000,
            max_points: crate::server::MAX_CLOUD_POINTS,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config file: {e}")))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config file {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Control and treated arms: explicit `[arms]` or the scenario preset.
    pub fn arms(&self) -> CliResult<(ArmModel, ArmModel)> {
        match self.arms {
            Some(a) => Ok((a.control, a.treated)),
            None => Ok(idcep::simulate::scenario_arms(self.scenario.id)?),
        }
    }
}

/// Fails with a configuration error when an input file is missing.
pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} does not exist", path.display())))
    }
}

/// Fails with a configuration error when an input directory is missing.
pub fn require_dir(path: &Path, what: &str) -> CliResult<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{what} {} is not a directory", path.display())))
    }
}

/// Creates the parent directory of an output file.
pub fn prepare_output(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", dir.display()))),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use idcep::FrailtyStructure;

    #[test]
    fn default_config_round_trips() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn customized_config_round_trips() {
        let mut cfg = RunConfig {
            command: Some("truth-cep".into()),
            seed: 99,
            ..RunConfig::default()
        };
        cfg.paths.data = Some("a/b.csv".into());
        cfg.censoring = CensoringConfig::none().into();
        cfg.cep.rho_s = 0.123456789012345;
        cfg.cep.structure = FrailtyStructure::FullSix;
        cfg.cep.full_corr = Some(idcep::FullCorrelation::strong_death_link());
        cfg.cep.quadrature.error_tolerance = Some(1e-9);
        cfg.arms = Some(ArmsSection {
            control: ArmModel::exponential(1.0, 0.5, 1.0),
            treated: ArmModel::exponential(0.61, 0.31, 1.0 / 3.0),
        });
        cfg.sweep.rho_s = vec![-0.5, 0.1];
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(CensoringConfig::from(back.censoring), CensoringConfig::none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("sed = 3"), Err(CliError::Config(_))));
        assert!(RunConfig::from_toml("[cep]\nrho_s = 0.2\n").is_ok());
    }

    #[test]
    fn partial_sections_keep_defaults() {
        let cfg = RunConfig::from_toml("[scenario]\nid = 5\n[truth]\nn_draws = 5000\n").unwrap();
        assert_eq!(cfg.scenario.id, 5);
        assert_eq!(cfg.scenario.n, 600);
        assert_eq!(cfg.truth.n_draws, 5000);
        assert_eq!(cfg.truth.max_points, crate::server::MAX_CLOUD_POINTS);
    }
}
