//! Causal effect predictiveness: per-subject treatment effects on S and T,
//! per-iteration line fits, truth curves from generating parameters and
//! correlation sensitivity sweeps.
//!
//! For subject `i` with frailties `ω⁰, ω¹` in the two arms,
//!
//! * `ΔSᵢ = log(Λ₁₂⁰(τ_S) / Λ₁₂¹(τ_S))`, the log cumulative hazard ratio of S;
//! * `ΔTᵢ = P(Tᵢ(1) > τ_T) − P(Tᵢ(0) > τ_T)`, the difference in survival.
//!
//! A valid surrogate has a line `ΔT = γ₀ + γ₁ ΔS` with `γ₀ = 0` and `γ₁ > 0`.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::frailty::{CounterfactualLaw, FrailtyConfig, FrailtyStructure, FullCorrelation, JointFrailtyLaw};
use crate::inference::{quantile, ChainDraws};
use crate::model::{ArmModel, FrailtySet, SubjectHazards};
use crate::quadrature::{Quadrature, QuadratureConfig};
use crate::rng::{substream, tag};

/// Curve family drawn through the cloud.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CurveFit {
    #[default]
    Linear,
}

/// Settings shared by chain-based and truth CEP computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CepConfig {
    pub tau_s: f64,
    pub tau_t: f64,
    /// Cross-arm correlation of ω₁₂.
    pub rho_s: f64,
    /// Cross-arm correlation of ω₁₃.
    pub rho_t: f64,
    /// Marginal frailty sd used by the cross-arm law.
    pub sigma_omega: f64,
    pub structure: FrailtyStructure,
    /// Remaining correlation entries for `FULL_SIX`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_corr: Option<FullCorrelation>,
    pub quadrature: QuadratureConfig,
    pub fit: CurveFit,
    /// Keep every iteration's cloud in chain-based results.
    pub keep_iteration_clouds: bool,
}

impl Default for CepConfig {
    fn default() -> Self {
        Self {
            tau_s: 1.0,
            tau_t: 5.0,
            rho_s: 0.5,
            rho_t: 0.5,
            sigma_omega: 0.4,
            structure: FrailtyStructure::Equal1323,
            full_corr: None,
            quadrature: QuadratureConfig::default(),
            fit: CurveFit::Linear,
            keep_iteration_clouds: false,
        }
    }
}

impl CepConfig {
    pub fn frailty(&self) -> FrailtyConfig {
        FrailtyConfig {
            structure: self.structure,
            sigma_omega: self.sigma_omega,
            rho_s: self.rho_s,
            rho_t: self.rho_t,
            full_corr: self.full_corr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("tau_s", self.tau_s), ("tau_t", self.tau_t)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.tau_s >= self.tau_t {
            return Err(Error::config(format!(
                "tau_s ({}) must be smaller than tau_t ({})",
                self.tau_s, self.tau_t
            )));
        }
        self.frailty().validate()?;
        Quadrature::new(&self.quadrature).map(|_| ())
    }
}

/// Treatment effect on S for one subject.
pub fn delta_s(
    control: &ArmModel,
    w_control: &FrailtySet,
    treated: &ArmModel,
    w_treated: &FrailtySet,
    tau_s: f64,
) -> Result<f64> {
    if !(tau_s > 0.0) {
        return Err(Error::domain(format!("tau_s must be positive, got {tau_s}")));
    }
    let (p0, p1) = (&control.t12, &treated.t12);
    if !(p0.gamma > 0.0) || !(p1.gamma > 0.0) {
        return Err(Error::domain(
            "the 1→2 scale must be positive in both arms for a log cumulative hazard ratio",
        ));
    }
    Ok((p0.gamma / p1.gamma).ln() + (p0.alpha - p1.alpha) * tau_s.ln() + p0.kappa * w_control.omega12
        - p1.kappa * w_treated.omega12)
}

/// Treatment effect on T for one subject.
pub fn delta_t(
    control: &ArmModel,
    w_control: &FrailtySet,
    treated: &ArmModel,
    w_treated: &FrailtySet,
    tau_t: f64,
    quad: &Quadrature,
) -> Result<f64> {
    let s1 = crate::model::survival_prob(treated, w_treated, tau_t, quad)?;
    let s0 = crate::model::survival_prob(control, w_control, tau_t, quad)?;
    Ok(s1 - s0)
}

/// Ordinary least-squares line `y = gamma0 + gamma1 x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub gamma0: f64,
    pub gamma1: f64,
}

/// Fits `dt = gamma0 + gamma1 ds` by least squares.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 2 {
        return Err(Error::data(format!("a line needs at least 2 points, got {}", points.len())));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let scale = 1.0f64.max(mx * mx);
    if !(sxx > 1e-24 * n * scale) {
        return Err(Error::data(format!(
            "ΔS has (near) zero variance across {} points (mean {mx}); slope undefined",
            points.len()
        )));
    }
    let gamma1 = sxy / sxx;
    Ok(LineFit {
        gamma0: my - gamma1 * mx,
        gamma1,
    })
}

/// One subject's point in the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CepPoint {
    pub id: u64,
    pub ds: f64,
    pub dt: f64,
}

/// Line fitted at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationLine {
    pub iter: usize,
    pub g0: f64,
    pub g1: f64,
}

/// Posterior (or Monte-Carlo) summary of a CEP computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CepSummary {
    pub g0_mean: f64,
    pub g0_lo: Option<f64>,
    pub g0_hi: Option<f64>,
    pub g1_mean: f64,
    pub g1_lo: Option<f64>,
    pub g1_hi: Option<f64>,
    pub mean_ds: f64,
    pub mean_dt: f64,
}

impl CepSummary {
    /// True when the 95% interval of γ₀ contains 0.
    pub fn intercept_covers_zero(&self) -> Option<bool> {
        Some(self.g0_lo? <= 0.0 && 0.0 <= self.g0_hi?)
    }

    /// True when the 95% interval of γ₁ lies strictly above 0.
    pub fn slope_excludes_zero(&self) -> Option<bool> {
        Some(self.g1_lo? > 0.0)
    }
}

/// Full output of a CEP computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepResult {
    pub config: CepConfig,
    /// Per-subject points: posterior means for chain-based results, one point
    /// per frailty draw for truth curves (possibly thinned, see
    /// [`CepResult::thinned`]).
    pub points: Vec<CepPoint>,
    /// Number of points before any thinning.
    pub points_total: usize,
    pub lines: Vec<IterationLine>,
    pub summary: CepSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clouds: Option<Vec<Vec<CepPoint>>>,
}

impl CepResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Copy with the cloud thinned to at most `max_points`; the summary and
    /// lines are untouched.
    pub fn thinned(&self, max_points: usize) -> Self {
        Self {
            points: downsample(&self.points, max_points),
            ..self.clone()
        }
    }

    pub fn save_svg(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), render_svg(self))?;
        Ok(())
    }
}

/// Deterministic stratified thinning by ΔS rank: keeps the points at evenly
/// spaced ranks, in their original order.
pub fn downsample(points: &[CepPoint], max_points: usize) -> Vec<CepPoint> {
    if points.len() <= max_points {
        return points.to_vec();
    }
    if max_points == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].ds.total_cmp(&points[b].ds).then(a.cmp(&b)));
    let n = points.len();
    let mut keep: Vec<usize> = (0..max_points).map(|k| order[(2 * k + 1) * n / (2 * max_points)]).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| points[i]).collect()
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    s / n as f64
}

/// Cloud of one iteration or one truth evaluation, computed with precomputed
/// per-subject hazards.
fn effect(
    control: &ArmModel,
    w0: &FrailtySet,
    treated: &ArmModel,
    w1: &FrailtySet,
    config: &CepConfig,
    quad: &Quadrature,
) -> Result<(f64, f64)> {
    let ds = delta_s(control, w0, treated, w1, config.tau_s)?;
    let s0 = SubjectHazards::new(control, w0).survival(config.tau_t, quad)?;
    let s1 = SubjectHazards::new(treated, w1).survival(config.tau_t, quad)?;
    Ok((ds, s1 - s0))
}

/// CEP from posterior draws: at every stored iteration each subject keeps the
/// frailties drawn for its own arm, receives counterfactual frailties for the
/// other arm from the conditional normal, and the line is refitted.
pub fn cep_from_chain(draws: &ChainDraws, dataset: &Dataset, config: &CepConfig, seed: u64) -> Result<CepResult> {
    config.validate()?;
    let quad = Quadrature::new(&config.quadrature)?;
    let law = CounterfactualLaw::new(&config.frailty())?;
    for chain in &draws.arms {
        let ids: Vec<u64> = dataset.arm(chain.z).iter().map(|r| r.id).collect();
        if ids != chain.subject_ids {
            return Err(Error::data(format!(
                "arm {}: chain holds frailties for {} subjects but the dataset has {} (or ids differ)",
                chain.z,
                chain.subject_ids.len(),
                ids.len()
            )));
        }
    }
    let [c0, c1] = &draws.arms;
    if c0.frailty_iters != c1.frailty_iters {
        return Err(Error::data("the two arm chains stored frailties at different iterations"));
    }
    if c0.frailty_iters.is_empty() {
        return Err(Error::data("chain holds no post-burn-in frailty draws"));
    }

    let subjects: Vec<(u8, usize, u64)> = draws
        .arms
        .iter()
        .flat_map(|c| c.subject_ids.iter().enumerate().map(move |(k, &id)| (c.z, k, id)))
        .collect();
    let n = subjects.len();
    let mut sum_ds = vec![0.0; n];
    let mut sum_dt = vec![0.0; n];
    let mut lines = Vec::with_capacity(c0.frailty_iters.len());
    let mut clouds = config.keep_iteration_clouds.then(Vec::new);
    let mut pts = Vec::with_capacity(n);

    for (k, &iter) in c0.frailty_iters.iter().enumerate() {
        let control = c0.params_at_frailty_draw(k);
        let treated = c1.params_at_frailty_draw(k);
        pts.clear();
        for (j, &(z, idx, id)) in subjects.iter().enumerate() {
            let observed = draws.arms[z as usize].frailties[k][idx];
            let mut rng = substream(seed, tag::COUNTERFACTUAL, iter as u64, id);
            let other = law.draw(z as usize, &observed, &mut rng);
            let (w0, w1) = if z == 0 { (observed, other) } else { (other, observed) };
            let (ds, dt) = effect(control, &w0, treated, &w1, config, &quad)?;
            sum_ds[j] += ds;
            sum_dt[j] += dt;
            pts.push((ds, dt));
        }
        let line = fit_line(&pts)?;
        lines.push(IterationLine {
            iter,
            g0: line.gamma0,
            g1: line.gamma1,
        });
        if let Some(c) = clouds.as_mut() {
            c.push(
                subjects
                    .iter()
                    .zip(&pts)
                    .map(|(&(_, _, id), &(ds, dt))| CepPoint { id, ds, dt })
                    .collect(),
            );
        }
    }

    let m = lines.len() as f64;
    let points: Vec<CepPoint> = subjects
        .iter()
        .enumerate()
        .map(|(j, &(_, _, id))| CepPoint {
            id,
            ds: sum_ds[j] / m,
            dt: sum_dt[j] / m,
        })
        .collect();
    let summary = summarize_lines(&lines, &points);
    Ok(CepResult {
        config: *config,
        points_total: points.len(),
        points,
        lines,
        summary,
        clouds,
    })
}

fn summarize_lines(lines: &[IterationLine], points: &[CepPoint]) -> CepSummary {
    let mut g0: Vec<f64> = lines.iter().map(|l| l.g0).collect();
    let mut g1: Vec<f64> = lines.iter().map(|l| l.g1).collect();
    g0.sort_by(|a, b| a.total_cmp(b));
    g1.sort_by(|a, b| a.total_cmp(b));
    let interval = |v: &[f64]| {
        if v.len() > 1 {
            (Some(quantile(v, 0.025)), Some(quantile(v, 0.975)))
        } else {
            (None, None)
        }
    };
    let (g0_lo, g0_hi) = interval(&g0);
    let (g1_lo, g1_hi) = interval(&g1);
    CepSummary {
        g0_mean: mean(g0.iter().copied()),
        g0_lo,
        g0_hi,
        g1_mean: mean(g1.iter().copied()),
        g1_lo,
        g1_hi,
        mean_ds: mean(points.iter().map(|p| p.ds)),
        mean_dt: mean(points.iter().map(|p| p.dt)),
    }
}

/// Smallest number of frailty draws accepted by [`truth_cep`].
pub const MIN_TRUTH_DRAWS: usize = 1000;

/// CEP from generating parameters: `n_draws` frailty pairs from the joint
/// cross-arm law give the cloud and one least-squares line.
pub fn truth_cep(
    control: &ArmModel,
    treated: &ArmModel,
    config: &CepConfig,
    n_draws: usize,
    seed: u64,
) -> Result<CepResult> {
    config.validate()?;
    if n_draws < MIN_TRUTH_DRAWS {
        return Err(Error::config(format!(
            "n_draws must be at least {MIN_TRUTH_DRAWS}, got {n_draws}"
        )));
    }
    control.validate(true)?;
    treated.validate(true)?;
    let quad = Quadrature::new(&config.quadrature)?;
    let law = JointFrailtyLaw::new(&config.frailty())?;
    let mut points = Vec::with_capacity(n_draws);
    let mut xy = Vec::with_capacity(n_draws);
    for i in 0..n_draws {
        let mut rng = substream(seed, tag::TRUTH, i as u64, 0);
        let (w0, w1) = law.draw(&mut rng);
        let (ds, dt) = effect(control, &w0, treated, &w1, config, &quad)?;
        points.push(CepPoint { id: i as u64, ds, dt });
        xy.push((ds, dt));
    }
    let line = fit_line(&xy)?;
    let lines = vec![IterationLine {
        iter: 0,
        g0: line.gamma0,
        g1: line.gamma1,
    }];
    let summary = summarize_lines(&lines, &points);
    Ok(CepResult {
        config: *config,
        points_total: points.len(),
        points,
        lines,
        summary,
        clouds: None,
    })
}

/// Truth CEP of one of the eight preset scenarios.
pub fn truth_cep_scenario(scenario: u8, config: &CepConfig, n_draws: usize, seed: u64) -> Result<CepResult> {
    let (control, treated) = crate::simulate::scenario_arms(scenario)?;
    truth_cep(&control, &treated, config, n_draws, seed)
}

/// What a sensitivity sweep evaluates at every grid point.
#[derive(Debug, Clone, Copy)]
pub enum SweepTarget<'a> {
    Truth {
        control: &'a ArmModel,
        treated: &'a ArmModel,
        n_draws: usize,
    },
    Chain {
        draws: &'a ChainDraws,
        dataset: &'a Dataset,
    },
}

/// Grid of cross-arm assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub rho_s: Vec<f64>,
    pub rho_t: Vec<f64>,
    pub structures: Vec<FrailtyStructure>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            rho_s: vec![0.25, 0.5, 0.75],
            rho_t: vec![0.25, 0.5, 0.75],
            structures: vec![FrailtyStructure::Equal1323],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub structure: FrailtyStructure,
    pub rho_s: f64,
    pub rho_t: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub mean_ds: f64,
    pub mean_dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSkip {
    pub structure: FrailtyStructure,
    pub rho_s: f64,
    pub rho_t: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub skipped: Vec<SweepSkip>,
}

impl SweepTable {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for r in &self.rows {
            wtr.serialize(r)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Evaluates the CEP at every grid point with the same seed. Grid points whose
/// correlation matrix is not positive semi-definite are skipped with a warning.
pub fn sensitivity_sweep(target: SweepTarget<'_>, base: &CepConfig, grid: &SweepGrid, seed: u64) -> Result<SweepTable> {
    if grid.rho_s.is_empty() || grid.rho_t.is_empty() || grid.structures.is_empty() {
        return Err(Error::config("sweep grid needs at least one value per axis"));
    }
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &structure in &grid.structures {
        for &rho_s in &grid.rho_s {
            for &rho_t in &grid.rho_t {
                let config = CepConfig {
                    structure,
                    rho_s,
                    rho_t,
                    full_corr: if structure == FrailtyStructure::FullSix {
                        Some(base.full_corr.unwrap_or_else(|| FullCorrelation::uniform(0.0)))
                    } else {
                        base.full_corr
                    },
                    ..*base
                };
                let outcome = match target {
                    SweepTarget::Truth {
                        control,
                        treated,
                        n_draws,
                    } => truth_cep(control, treated, &config, n_draws, seed),
                    SweepTarget::Chain { draws, dataset } => cep_from_chain(draws, dataset, &config, seed),
                };
                match outcome {
                    Ok(r) => rows.push(SweepRow {
                        structure,
                        rho_s,
                        rho_t,
                        gamma0: r.summary.g0_mean,
                        gamma1: r.summary.g1_mean,
                        mean_ds: r.summary.mean_ds,
                        mean_dt: r.summary.mean_dt,
                    }),
                    Err(e @ Error::NotPsd { .. }) => {
                        log::warn!("skipping sweep point {structure:?} rho_s={rho_s} rho_t={rho_t}: {e}");
                        skipped.push(SweepSkip {
                            structure,
                            rho_s,
                            rho_t,
                            reason: e.to_string(),
                        });
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(SweepTable { rows, skipped })
}

/// Scatter of the cloud with the fitted line, the origin crosshair and dashed
/// marginal-effect lines, as a standalone SVG document.
pub fn render_svg(result: &CepResult) -> String {
    const W: f64 = 640.0;
    const H: f64 = 480.0;
    const M: f64 = 56.0;
    let pts = downsample(&result.points, 5000);
    let s = &result.summary;
    let (mut x0, mut x1) = (0.0f64, 0.0f64);
    let (mut y0, mut y1) = (0.0f64, 0.0f64);
    for p in &pts {
        x0 = x0.min(p.ds);
        x1 = x1.max(p.ds);
        y0 = y0.min(p.dt);
        y1 = y1.max(p.dt);
    }
    let pad = |lo: f64, hi: f64| {
        let span = (hi - lo).max(1e-6);
        (lo - 0.05 * span, hi + 0.05 * span)
    };
    let (x0, x1) = pad(x0, x1);
    let (y0, y1) = pad(y0, y1);
    let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    // origin crosshair
    let _ = writeln!(
        out,
        r##"<line x1="{:.2}" y1="{M}" x2="{:.2}" y2="{:.2}" stroke="#888"/>"##,
        sx(0.0),
        sx(0.0),
        H - M
    );
    let _ = writeln!(
        out,
        r##"<line x1="{M}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888"/>"##,
        sy(0.0),
        W - M,
        sy(0.0)
    );
    let _ = writeln!(out, r#"<g fill="steelblue" fill-opacity="0.5">"#);
    for p in &pts {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="2"/>"#, sx(p.ds), sy(p.dt));
    }
    let _ = writeln!(out, "</g>");
    // per-iteration lines (thinned) and the mean line
    let step = (result.lines.len() / 100).max(1);
    if result.lines.len() > 1 {
        let _ = writeln!(out, r#"<g stroke="gray" stroke-opacity="0.15">"#);
        for l in result.lines.iter().step_by(step) {
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
                sx(x0),
                sy(l.g0 + l.g1 * x0),
                sx(x1),
                sy(l.g0 + l.g1 * x1)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
        sx(x0),
        sy(s.g0_mean + s.g1_mean * x0),
        sx(x1),
        sy(s.g0_mean + s.g1_mean * x1)
    );
    // marginal effects
    let _ = writeln!(
        out,
        r#"<line x1="{:.2}" y1="{M}" x2="{:.2}" y2="{:.2}" stroke="red" stroke-dasharray="6 4"/>"#,
        sx(s.mean_ds),
        sx(s.mean_ds),
        H - M
    );
    let _ = writeln!(
        out,
        r#"<line x1="{M}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="red" stroke-dasharray="6 4"/>"#,
        sy(s.mean_dt),
        W - M,
        sy(s.mean_dt)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">ΔS (log cumulative hazard ratio at τS = {})</text>"#,
        W / 2.0,
        H - 16.0,
        result.config.tau_s
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">ΔT (survival difference at τT = {})</text>"#,
        H / 2.0,
        H / 2.0,
        result.config.tau_t
    );
    let _ = writeln!(
        out,
        r#"<text x="{M}" y="{:.1}">γ0 = {:.4}, γ1 = {:.4}, mean ΔS = {:.4}, mean ΔT = {:.4}</text>"#,
        M - 12.0,
        s.g0_mean,
        s.g1_mean,
        s.mean_ds,
        s.mean_dt
    );
    for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{v:.2}</text>"#, H - M + 16.0);
    }
    for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(out, r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">{v:.2}</text>"#, M - 4.0);
    }
    out.push_str("</svg>\n");
    out
}
