//! Subcommand definitions and implementations.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use idcep::cep::{cep_from_chain, sensitivity_sweep, CepConfig, CepResult, SweepTarget};
use idcep::inference::{fit, ChainDraws, FIT_SUMMARY_FILE};
use idcep::prentice::{prentice_report, PrenticeModel};
use idcep::simulate::simulate_trial;
use idcep::{Dataset, FrailtyStructure, ModelVariant, ScenarioSpec};

use crate::config::{prepare_output, require_dir, require_file, RunConfig};
use crate::error::{CliError, CliResult};
use crate::server::TruthCepRequest;

#[derive(Debug, Parser)]
#[command(name = "idcep", version, about = "Causal surrogate validation for two time-to-event endpoints")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a two-arm trial from a preset scenario or explicit arms.
    Simulate(SimulateArgs),
    /// Fit both arms by block Metropolis–Hastings and save the chain.
    Fit(FitArgs),
    /// CEP curve from a fitted chain.
    Cep(CepArgs),
    /// CEP curve from generating parameters.
    TruthCep(TruthCepArgs),
    /// CEP summaries over a grid of cross-arm correlations.
    Sweep(SweepArgs),
    /// Weibull proportional-hazards surrogacy checks.
    Prentice(PrenticeArgs),
    /// Serve the truth-CEP API and, optionally, static assets.
    Serve(ServeArgs),
}

/// Options every file-backed subcommand accepts.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl CommonArgs {
    fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn parse_structure(s: &str) -> Result<FrailtyStructure, String> {
    let name = s.trim().to_ascii_uppercase().replace('-', "_");
    serde_json::from_value(serde_json::Value::String(name))
        .map_err(|_| format!("unknown structure {s:?}; expected EQUAL_13_23, INDEPENDENT_THREE or FULL_SIX"))
}

fn parse_variant(s: &str) -> Result<ModelVariant, String> {
    match s.trim().to_ascii_uppercase().as_str() {
        "A" => Ok(ModelVariant::A),
        "B" => Ok(ModelVariant::B),
        _ => Err(format!("unknown model variant {s:?}; expected A or B")),
    }
}

/// Flags shared by every CEP computation.
#[derive(Debug, Clone, Default, Args)]
pub struct CepFlags {
    /// Landmark time for the surrogate (S) comparison.
    #[arg(long)]
    pub tau_s: Option<f64>,
    /// Horizon for the true-endpoint (T) comparison.
    #[arg(long)]
    pub tau_t: Option<f64>,
    /// Cross-arm correlation of the S frailties.
    #[arg(long, allow_hyphen_values = true)]
    pub rho_s: Option<f64>,
    /// Cross-arm correlation of the T frailties.
    #[arg(long, allow_hyphen_values = true)]
    pub rho_t: Option<f64>,
    /// Frailty sd used by the counterfactual conditional law.
    #[arg(long)]
    pub sigma_omega: Option<f64>,
    /// EQUAL_13_23, INDEPENDENT_THREE or FULL_SIX.
    #[arg(long, value_parser = parse_structure)]
    pub structure: Option<FrailtyStructure>,
    /// Gauss–Legendre nodes for the survival integral.
    #[arg(long)]
    pub quadrature_nodes: Option<usize>,
}

impl CepFlags {
    fn apply(&self, c: &mut CepConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(tau_s, tau_t, rho_s, rho_t, sigma_omega, structure);
        if let Some(n) = self.quadrature_nodes {
            c.quadrature.nodes = n;
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Preset scenario 1..=8 (ignored when the config file sets `[arms]`).
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Total number of subjects.
    #[arg(long)]
    pub n: Option<usize>,
    /// Observed-data CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the complete counterfactual data.
    #[arg(long)]
    pub complete_out: Option<PathBuf>,
    /// Administrative censoring time; `inf` disables it.
    #[arg(long)]
    pub admin_time: Option<f64>,
    /// Rate of exponential random censoring.
    #[arg(long)]
    pub random_censor_rate: Option<f64>,
    /// Cross-arm correlation of the S frailties.
    #[arg(long, allow_hyphen_values = true)]
    pub rho_s: Option<f64>,
    /// Cross-arm correlation of the T frailties.
    #[arg(long, allow_hyphen_values = true)]
    pub rho_t: Option<f64>,
    /// Frailty standard deviation.
    #[arg(long)]
    pub sigma_omega: Option<f64>,
    /// EQUAL_13_23, INDEPENDENT_THREE or FULL_SIX.
    #[arg(long, value_parser = parse_structure)]
    pub structure: Option<FrailtyStructure>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Observed-data CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory receiving the chain files and the fit summary.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Total sampler iterations per arm.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Iterations discarded as burn-in.
    #[arg(long)]
    pub burnin: Option<usize>,
    /// 2→3 link: A (entry time) or B (two frailties).
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<ModelVariant>,
    /// Within-arm frailty structure.
    #[arg(long, value_parser = parse_structure)]
    pub structure: Option<FrailtyStructure>,
    /// Hold every Weibull shape at 1.
    #[arg(long)]
    pub fix_alpha: bool,
    /// Estimate the 2→3 frailty coefficient.
    #[arg(long)]
    pub free_kappa: bool,
    /// Scale proposal sds during burn-in.
    #[arg(long)]
    pub adapt: bool,
    /// Keep every k-th frailty draw in the chain files.
    #[arg(long)]
    pub frailty_thin: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Chain directory written by `fit`.
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// The dataset the chain was fitted on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// CEP JSON; defaults to `cep.json` in the chain directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG plot; defaults to `cep.svg` next to the JSON.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub cep: CepFlags,
}

#[derive(Debug, Clone, Args)]
pub struct TruthCepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Preset scenario 1..=8 (ignored when the config file sets `[arms]`).
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Counterfactual frailty draws.
    #[arg(long)]
    pub n_draws: Option<usize>,
    /// Largest cloud kept in the JSON.
    #[arg(long)]
    pub max_points: Option<usize>,
    /// CEP JSON to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// SVG plot to write.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    #[command(flatten)]
    pub cep: CepFlags,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Sweep a fitted chain instead of generating parameters.
    #[arg(long, requires = "data")]
    pub chain: Option<PathBuf>,
    /// The dataset the chain was fitted on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Preset scenario for a truth sweep.
    #[arg(long)]
    pub scenario: Option<u8>,
    /// Counterfactual frailty draws per grid point.
    #[arg(long)]
    pub n_draws: Option<usize>,
    /// Comma-separated grid of cross-arm S correlations.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho_s_grid: Option<Vec<f64>>,
    /// Comma-separated grid of cross-arm T correlations.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho_t_grid: Option<Vec<f64>>,
    /// Comma-separated structures to sweep.
    #[arg(long, value_delimiter = ',', value_parser = parse_structure)]
    pub structures: Option<Vec<FrailtyStructure>>,
    /// CSV table of the grid.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON table including skipped points.
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub cep: CepFlags,
}

#[derive(Debug, Clone, Args)]
pub struct PrenticeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Observed-data CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// TCP port to listen on.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Directory of static assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a, out),
        Command::Fit(a) => fit_command(&a, out),
        Command::Cep(a) => cep(&a, out),
        Command::TruthCep(a) => truth_cep(&a, out),
        Command::Sweep(a) => sweep(&a, out),
        Command::Prentice(a) => prentice(&a, out),
        Command::Serve(a) => serve(&a, out),
    }
}

fn required(path: Option<PathBuf>, flag: &str) -> CliResult<PathBuf> {
    path.ok_or_else(|| CliError::Config(format!("missing --{flag} (or the matching [paths] entry)")))
}

fn load_dataset(path: &Path) -> CliResult<Dataset> {
    require_file(path, "data file")?;
    Ok(Dataset::load(path)?)
}

/// Builds the simulation spec from the config and flags.
pub fn simulate_spec(a: &SimulateArgs, cfg: &mut RunConfig) -> CliResult<ScenarioSpec> {
    if let Some(id) = a.scenario {
        cfg.scenario.id = id;
        cfg.arms = None;
    }
    if let Some(n) = a.n {
        cfg.scenario.n = n;
    }
    if let Some(t) = a.admin_time {
        cfg.censoring.admin_time = t;
    }
    if let Some(r) = a.random_censor_rate {
        cfg.censoring.random_rate = r;
    }
    let f = &mut cfg.scenario.frailty;
    if let Some(v) = a.rho_s {
        f.rho_s = v;
    }
    if let Some(v) = a.rho_t {
        f.rho_t = v;
    }
    if let Some(v) = a.sigma_omega {
        f.sigma_omega = v;
    }
    if let Some(v) = a.structure {
        f.structure = v;
    }
    let (control, treated) = cfg.arms()?;
    let spec = ScenarioSpec {
        scenario_id: cfg.arms.is_none().then_some(cfg.scenario.id),
        control,
        treated,
        frailty: cfg.scenario.frailty,
        n: cfg.scenario.n,
        censoring: cfg.censoring.into(),
        seed: cfg.seed,
    };
    spec.validate()?;
    Ok(spec)
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = a.common.load()?;
    let spec = simulate_spec(a, &mut cfg)?;
    let path = required(a.out.clone().or(cfg.paths.data.clone()), "out")?;
    prepare_output(&path)?;
    let trial = simulate_trial(&spec)?;
    let data = trial.observed();
    data.save(&path)?;
    if let Some(complete) = a.complete_out.clone().or(cfg.paths.complete.clone()) {
        prepare_output(&complete)?;
        trial.save_complete(&complete)?;
    }
    let counts = data.transition_counts();
    writeln!(out, "wrote {} subjects to {}", data.len(), path.display())?;
    writeln!(out, "arm  n    1->2  1->3  2->3")?;
    for z in 0..2u8 {
        let c = counts[z as usize];
        writeln!(out, "z={z}  {:<4} {:<5} {:<5} {:<5}", data.arm(z).len(), c[0], c[1], c[2])?;
    }
    Ok(())
}

fn fit_command(a: &FitArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = a.common.load()?;
    let data_path = required(a.data.clone().or(cfg.paths.data.clone()), "data")?;
    let dir = a.out_dir.clone().or(cfg.paths.chain.clone()).unwrap_or_else(|| PathBuf::from("chain"));
    let data = load_dataset(&data_path)?;
    let mut sampler = cfg.sampler;
    sampler.seed = cfg.seed;
    if let Some(v) = a.iters {
        sampler.iterations = v;
    }
    if let Some(v) = a.burnin {
        sampler.burn_in = v;
    }
    if let Some(v) = a.variant {
        sampler.variant = v;
    }
    if let Some(v) = a.structure {
        sampler.frailty.structure = v;
    }
    if let Some(v) = a.frailty_thin {
        sampler.frailty_thin = v;
    }
    sampler.fix_alpha_to_one |= a.fix_alpha;
    sampler.fix_kappa_to_one &= !a.free_kappa;
    sampler.adapt_during_burn_in |= a.adapt;
    sampler.validate()?;
    cfg.prior.validate()?;
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Config(format!("output directory {} is not writable: {e}", dir.display())))?;

    let draws = fit(&data, &sampler, &cfg.prior)?;
    draws.save_dir(&dir)?;
    let summary = draws.summary(&data);
    std::fs::write(dir.join(FIT_SUMMARY_FILE), serde_json::to_string_pretty(&summary).map_err(idcep::Error::from)? + "\n")?;

    writeln!(out, "chain written to {}", dir.display())?;
    for arm in &summary.arms {
        writeln!(out, "arm z={} ({} subjects, transitions {:?})", arm.z, arm.subjects, arm.transitions)?;
        writeln!(out, "  {:<18} {:>9} {:>9} {:>9}", "parameter", "mean", "2.5%", "97.5%")?;
        for p in &arm.parameters {
            writeln!(out, "  {:<18} {:>9.4} {:>9.4} {:>9.4}", p.name, p.mean, p.q025, p.q975)?;
        }
        let rates: Vec<String> = arm.acceptance.iter().map(|r| format!("{} {:.2}", r.block, r.rate)).collect();
        writeln!(out, "  acceptance: {}", rates.join(", "))?;
        for w in &arm.warnings {
            writeln!(out, "  warning: {w}")?;
        }
    }
    Ok(())
}

fn write_cep_summary(out: &mut dyn Write, r: &CepResult) -> CliResult<()> {
    let s = &r.summary;
    let ci = |lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
        (Some(l), Some(h)) => format!(" [{l:.4}, {h:.4}]"),
        _ => String::new(),
    };
    writeln!(out, "gamma0 {:.4}{}", s.g0_mean, ci(s.g0_lo, s.g0_hi))?;
    writeln!(out, "gamma1 {:.4}{}", s.g1_mean, ci(s.g1_lo, s.g1_hi))?;
    writeln!(out, "mean dS {:.4}  mean dT {:.4}  points {}", s.mean_ds, s.mean_dt, r.points_total)?;
    Ok(())
}

fn cep(a: &CepArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = a.common.load()?;
    a.cep.apply(&mut cfg.cep);
    let chain_dir = required(a.chain.clone().or(cfg.paths.chain.clone()), "chain")?;
    let data_path = required(a.data.clone().or(cfg.paths.data.clone()), "data")?;
    require_dir(&chain_dir, "chain directory")?;
    cfg.cep.validate()?;
    let json = a.out.clone().or(cfg.paths.out.clone()).unwrap_or_else(|| chain_dir.join("cep.json"));
    let svg = a.svg.clone().or(cfg.paths.svg.clone()).unwrap_or_else(|| json.with_extension("svg"));
    prepare_output(&json)?;
    prepare_output(&svg)?;
    let data = load_dataset(&data_path)?;
    let draws = ChainDraws::load_dir(&chain_dir)?;
    let result = cep_from_chain(&draws, &data, &cfg.cep, cfg.seed)?;
    result.save_json(&json)?;
    result.save_svg(&svg)?;
    write_cep_summary(out, &result)?;
    writeln!(out, "wrote {} and {}", json.display(), svg.display())?;
    Ok(())
}

/// The request `truth-cep` evaluates; identical to what the service runs for
/// the same body.
pub fn truth_cep_request(a: &TruthCepArgs) -> CliResult<TruthCepRequest> {
    let mut cfg = a.common.load()?;
    if let Some(id) = a.scenario {
        cfg.scenario.id = id;
        cfg.arms = None;
    }
    a.cep.apply(&mut cfg.cep);
    let (control, treated) = cfg.arms()?;
    cfg.cep.validate()?;
    Ok(TruthCepRequest {
        control,
        treated,
        config: cfg.cep,
        n_draws: a.n_draws.unwrap_or(cfg.truth.n_draws),
        seed: cfg.seed,
        max_points: a.max_points.unwrap_or(cfg.truth.max_points),
    })
}

fn truth_cep(a: &TruthCepArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = a.common.load()?;
    let request = truth_cep_request(a)?;
    let json = a.out.clone().or(cfg.paths.out.clone());
    let svg = a.svg.clone().or(cfg.paths.svg.clone());
    for p in json.iter().chain(svg.iter()) {
        prepare_output(p)?;
    }
    let result = request.compute()?;
    write_cep_summary(out, &result)?;
    if let Some(p) = json {
        result.save_json(&p)?;
        writeln!(out, "wrote {}", p.display())?;
    }
    if let Some(p) = svg {
        result.save_svg(&p)?;
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn sweep(a: &SweepArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = a.common.load()?;
    a.cep.apply(&mut cfg.cep);
    if let Some(id) = a.scenario {
        cfg.scenario.id = id;
        cfg.arms = None;
    }
    if let Some(v) = &a.rho_s_grid {
        cfg.sweep.rho_s = v.clone();
    }
    if let Some(v) = &a.rho_t_grid {
        cfg.sweep.rho_t = v.clone();
    }
    if let Some(v) = &a.structures {
        cfg.sweep.structures = v.clone();
    }
    for (name, grid) in [("rho_s", &cfg.sweep.rho_s), ("rho_t", &cfg.sweep.rho_t)] {
        if let Some(bad) = grid.iter().find(|r| !(-1.0..=1.0).contains(*r)) {
            return Err(CliError::Config(format!("{name} grid value {bad} is outside [-1, 1]")));
        }
    }
    for p in a.out.iter().chain(a.json.iter()) {
        prepare_output(p)?;
    }
    let chain = a.chain.clone().or(cfg.paths.chain.clone());
    let table = match chain {
        Some(dir) => {
            require_dir(&dir, "chain directory")?;
            let data = load_dataset(&required(a.data.clone().or(cfg.paths.data.clone()), "data")?)?;
            let draws = ChainDraws::load_dir(&dir)?;
            sensitivity_sweep(SweepTarget::Chain { draws: &draws, dataset: &data }, &cfg.cep, &cfg.sweep, cfg.seed)?
        }
        None => {
            let (control, treated) = cfg.arms()?;
            let target = SweepTarget::Truth {
                control: &control,
                treated: &treated,
                n_draws: a.n_draws.unwrap_or(cfg.truth.n_draws),
            };
            sensitivity_sweep(target, &cfg.cep, &cfg.sweep, cfg.seed)?
        }
    };
    writeln!(out, "{:<18} {:>6} {:>6} {:>9} {:>9} {:>9} {:>9}", "structure", "rho_s", "rho_t", "gamma0", "gamma1", "mean_dS", "mean_dT")?;
    for r in &table.rows {
        let name = serde_json::to_value(r.structure).map_err(idcep::Error::from)?;
        writeln!(
            out,
            "{:<18} {:>6.2} {:>6.2} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            name.as_str().unwrap_or_default(),
            r.rho_s,
            r.rho_t,
            r.gamma0,
            r.gamma1,
            r.mean_ds,
            r.mean_dt
        )?;
    }
    for s in &table.skipped {
        writeln!(out, "skipped rho_s={} rho_t={}: {}", s.rho_s, s.rho_t, s.reason)?;
    }
    if let Some(p) = &a.out {
        table.write_csv(std::io::BufWriter::new(std::fs::File::create(p)?))?;
    }
    if let Some(p) = &a.json {
        std::fs::write(p, serde_json::to_string_pretty(&table).map_err(idcep::Error::from)? + "\n")?;
    }
    Ok(())
}

fn prentice(a: &PrenticeArgs, out: &mut dyn Write) -> CliResult<()> {
    let cfg = a.common.load()?;
    let data = load_dataset(&required(a.data.clone().or(cfg.paths.data.clone()), "data")?)?;
    let json = a.out.clone().or(cfg.paths.out.clone());
    if let Some(p) = &json {
        prepare_output(p)?;
    }
    let report = prentice_report(&data, &cfg.prentice)?;
    for model in PrenticeModel::ALL {
        let Some(f) = report.fit(model) else { continue };
        writeln!(out, "{model:?}: loglik {:.3}, events {}", f.log_likelihood, f.events)?;
        for c in &f.coefficients {
            writeln!(
                out,
                "  {:<3} HR {:.3} (beta {:.4}, se {:.4}, p {:.3e})",
                c.name, c.hazard_ratio, c.estimate, c.se, c.p_value
            )?;
        }
    }
    if let Some(pe) = report.proportion_explained {
        writeln!(out, "proportion of treatment effect explained: {pe:.3}")?;
    }
    if let Some(p) = json {
        std::fs::write(&p, report.to_json()? + "\n")?;
        writeln!(out, "wrote {}", p.display())?;
    }
    Ok(())
}

fn serve(a: &ServeArgs, out: &mut dyn Write) -> CliResult<()> {
    if let Some(dir) = &a.static_dir {
        require_dir(dir, "static directory")?;
    }
    let addr = SocketAddr::new(a.host, a.port);
    writeln!(out, "serving on http://{addr}")?;
    out.flush()?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime
        .block_on(crate::server::serve(addr, a.static_dir.clone()))
        .map_err(|e| CliError::Config(format!("cannot serve on {addr}: {e}")))
}
