//! Conventional surrogacy checks: parametric Weibull proportional-hazards fits
//! of S on Z, T on Z, and T on Z with the time-dependent indicator I(t > S).
//!
//! The hazard is `λ α t^(α−1) exp(βᵀx)`, fitted by maximum likelihood over
//! `(log λ, log α, β)` with BFGS and a backtracking line search. The
//! time-dependent indicator is handled by splitting each subject's risk time at
//! S (counting-process form). Standard errors come from the inverse observed
//! information; tests are Wald tests.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Which conventional model to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PrenticeModel {
    /// Time to S (censored by death) on treatment.
    SOnZ,
    /// Time to death on treatment.
    TOnZ,
    /// Time to death on treatment and the time-dependent indicator of prior S.
    TOnZPlusS,
}

impl PrenticeModel {
    pub const ALL: [PrenticeModel; 3] = [PrenticeModel::SOnZ, PrenticeModel::TOnZ, PrenticeModel::TOnZPlusS];

    pub fn covariates(self) -> &'static [&'static str] {
        match self {
            PrenticeModel::SOnZ | PrenticeModel::TOnZ => &["z"],
            PrenticeModel::TOnZPlusS => &["z", "s"],
        }
    }
}

/// One risk interval `(start, stop]` with fixed covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskInterval {
    pub start: f64,
    pub stop: f64,
    pub event: bool,
    pub x: Vec<f64>,
}

/// Builds the counting-process rows of a model.
pub fn risk_intervals(dataset: &Dataset, model: PrenticeModel) -> Vec<RiskInterval> {
    let mut rows = Vec::with_capacity(dataset.len());
    for r in &dataset.records {
        let z = f64::from(r.z);
        match model {
            PrenticeModel::SOnZ => rows.push(RiskInterval {
                start: 0.0,
                stop: r.s_time,
                event: r.s_event,
                x: vec![z],
            }),
            PrenticeModel::TOnZ => rows.push(RiskInterval {
                start: 0.0,
                stop: r.t_time,
                event: r.t_event,
                x: vec![z],
            }),
            PrenticeModel::TOnZPlusS => {
                if r.s_event && r.s_time < r.t_time {
                    rows.push(RiskInterval {
                        start: 0.0,
                        stop: r.s_time,
                        event: false,
                        x: vec![z, 0.0],
                    });
                    rows.push(RiskInterval {
                        start: r.s_time,
                        stop: r.t_time,
                        event: r.t_event,
                        x: vec![z, 1.0],
                    });
                } else {
                    rows.push(RiskInterval {
                        start: 0.0,
                        stop: r.t_time,
                        event: r.t_event,
                        x: vec![z, 0.0],
                    });
                }
            }
        }
    }
    rows
}

#[inline]
fn xlogx_pow(t: f64, alpha: f64, power: i32) -> f64 {
    // t^α (ln t)^power, with the t → 0 limit 0
    if t == 0.0 {
        0.0
    } else {
        t.powf(alpha) * t.ln().powi(power)
    }
}

/// Log-likelihood of the Weibull PH model at `params = (log λ, log α, β...)`.
pub fn weibull_ph_loglik(rows: &[RiskInterval], params: &[f64]) -> f64 {
    let (log_lambda, log_alpha) = (params[0], params[1]);
    let alpha = log_alpha.exp();
    let beta = &params[2..];
    let mut ll = 0.0;
    for r in rows {
        let eta = log_lambda + beta.iter().zip(&r.x).map(|(b, x)| b * x).sum::<f64>();
        let a = xlogx_pow(r.stop, alpha, 0) - xlogx_pow(r.start, alpha, 0);
        if r.event {
            ll += eta + log_alpha + (alpha - 1.0) * r.stop.ln();
        }
        ll -= eta.exp() * a;
    }
    ll
}

/// Analytic gradient of [`weibull_ph_loglik`].
pub fn weibull_ph_gradient(rows: &[RiskInterval], params: &[f64]) -> Vec<f64> {
    let (log_lambda, log_alpha) = (params[0], params[1]);
    let alpha = log_alpha.exp();
    let beta = &params[2..];
    let mut g = vec![0.0; params.len()];
    for r in rows {
        let eta = log_lambda + beta.iter().zip(&r.x).map(|(b, x)| b * x).sum::<f64>();
        let e = eta.exp();
        let a = xlogx_pow(r.stop, alpha, 0) - xlogx_pow(r.start, alpha, 0);
        let b = alpha * (xlogx_pow(r.stop, alpha, 1) - xlogx_pow(r.start, alpha, 1));
        let d = if r.event { 1.0 } else { 0.0 };
        let resid = d - e * a;
        g[0] += resid;
        g[1] += d * (1.0 + alpha * if r.event { r.stop.ln() } else { 0.0 }) - e * b;
        for (gj, xj) in g[2..].iter_mut().zip(&r.x) {
            *gj += xj * resid;
        }
    }
    g
}

/// Analytic Hessian of [`weibull_ph_loglik`].
pub fn weibull_ph_hessian(rows: &[RiskInterval], params: &[f64]) -> Vec<Vec<f64>> {
    let p = params.len();
    let (log_lambda, log_alpha) = (params[0], params[1]);
    let alpha = log_alpha.exp();
    let beta = &params[2..];
    let mut h = vec![vec![0.0; p]; p];
    let mut grad_eta = vec![0.0; p];
    for r in rows {
        let eta = log_lambda + beta.iter().zip(&r.x).map(|(b, x)| b * x).sum::<f64>();
        let e = eta.exp();
        let a = xlogx_pow(r.stop, alpha, 0) - xlogx_pow(r.start, alpha, 0);
        let b = alpha * (xlogx_pow(r.stop, alpha, 1) - xlogx_pow(r.start, alpha, 1));
        let c = alpha * alpha * (xlogx_pow(r.stop, alpha, 2) - xlogx_pow(r.start, alpha, 2));
        // ∂η/∂θ: 1 for log λ, 0 for log α, x for β
        grad_eta[0] = 1.0;
        grad_eta[1] = 0.0;
        grad_eta[2..].copy_from_slice(&r.x);
        for i in 0..p {
            if i == 1 {
                continue;
            }
            for j in 0..p {
                if j == 1 {
                    continue;
                }
                h[i][j] -= e * a * grad_eta[i] * grad_eta[j];
            }
            h[i][1] -= e * b * grad_eta[i];
            h[1][i] -= e * b * grad_eta[i];
        }
        if r.event {
            h[1][1] += alpha * r.stop.ln();
        }
        h[1][1] -= e * (b + c);
    }
    h
}

/// A fitted coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub hazard_ratio: f64,
    pub wald_z: f64,
    pub p_value: f64,
}

/// Result of one conventional fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrenticeFit {
    pub model: PrenticeModel,
    /// Baseline Weibull scale λ.
    pub scale: f64,
    /// Baseline Weibull shape α.
    pub shape: f64,
    pub coefficients: Vec<Coefficient>,
    pub log_likelihood: f64,
    pub events: usize,
    pub iterations: usize,
}

impl PrenticeFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Optimiser settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub max_iterations: usize,
    /// Convergence when the largest absolute score component falls below this.
    pub gradient_tolerance: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-6,
        }
    }
}

/// Two-sided normal p-value of a Wald statistic.
pub fn wald_p_value(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximises a concave-ish objective by BFGS on its negative, with a
/// backtracking Armijo line search. Returns the argmax and iteration count.
pub fn bfgs_maximize<F, G>(mut f: F, mut grad: G, start: &[f64], cfg: &OptimConfig) -> Result<(Vec<f64>, usize)>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    let p = start.len();
    let mut x = start.to_vec();
    let mut fx = f(&x);
    let mut g = grad(&x);
    if !fx.is_finite() {
        return Err(Error::Numerical {
            message: "objective is not finite at the starting point".into(),
            estimate: fx,
        });
    }
    // inverse Hessian approximation of the negative objective
    let mut hinv: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for iter in 0..cfg.max_iterations {
        if inf_norm(&g) < cfg.gradient_tolerance {
            return Ok((x, iter));
        }
        // ascent direction d = H⁻¹ g
        let mut d: Vec<f64> = (0..p).map(|i| dot(&hinv[i], &g)).collect();
        if dot(&d, &g) <= 0.0 {
            // reset to steepest ascent if curvature information went bad
            for (i, row) in hinv.iter_mut().enumerate() {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = f64::from(u8::from(i == j));
                }
            }
            d = g.clone();
        }
        let slope = dot(&d, &g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let fxn = f(&xn);
            if fxn.is_finite() && fxn >= fx + 1e-4 * step * slope {
                accepted = Some((xn, fxn));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fxn)) = accepted else {
            return Err(Error::Numerical {
                message: format!("line search failed at iteration {iter}; gradient norm {:.3e}", inf_norm(&g)),
                estimate: inf_norm(&g),
            });
        };
        let gn = grad(&xn);
        // BFGS update for the negative objective: s = Δx, y = −Δg
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&gn).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..p).map(|i| dot(&hinv[i], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..p {
                for j in 0..p {
                    hinv[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        x = xn;
        fx = fxn;
        g = gn;
    }
    if inf_norm(&g) < cfg.gradient_tolerance {
        return Ok((x, cfg.max_iterations));
    }
    Err(Error::Numerical {
        message: format!(
            "no convergence after {} iterations; gradient norm {:.3e}",
            cfg.max_iterations,
            inf_norm(&g)
        ),
        estimate: inf_norm(&g),
    })
}

fn invert(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = m.len();
    let mat = nalgebra::DMatrix::from_fn(p, p, |i, j| m[i][j]);
    let inv = mat.try_inverse()?;
    Some((0..p).map(|i| (0..p).map(|j| inv[(i, j)]).collect()).collect())
}

fn newton_polish(rows: &[RiskInterval], mut x: Vec<f64>, cfg: &OptimConfig) -> Result<(Vec<f64>, usize)> {
    let p = x.len();
    let mut ll = weibull_ph_loglik(rows, &x);
    for iter in 0..50 {
        let g = weibull_ph_gradient(rows, &x);
        if inf_norm(&g) < cfg.gradient_tolerance {
            return Ok((x, iter));
        }
        let h = weibull_ph_hessian(rows, &x);
        let neg = nalgebra::DMatrix::from_fn(p, p, |i, j| -h[i][j]);
        let step = neg
            .cholesky()
            .map(|c| c.solve(&nalgebra::DVector::from_column_slice(&g)))
            .ok_or_else(|| Error::Numerical {
                message: format!("observed information is not positive definite; gradient norm {:.3e}", inf_norm(&g)),
                estimate: inf_norm(&g),
            })?;
        let mut t = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let xn: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let lln = weibull_ph_loglik(rows, &xn);
            if lln.is_finite() && lln >= ll - 1e-12 * ll.abs() {
                x = xn;
                ll = lln;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            break;
        }
    }
    let g = weibull_ph_gradient(rows, &x);
    if inf_norm(&g) < cfg.gradient_tolerance {
        return Ok((x, 50));
    }
    Err(Error::Numerical {
        message: format!("no convergence; gradient norm {:.3e}", inf_norm(&g)),
        estimate: inf_norm(&g),
    })
}

/// Fits one conventional Weibull proportional-hazards model.
pub fn fit_weibull_ph(dataset: &Dataset, model: PrenticeModel, cfg: &OptimConfig) -> Result<PrenticeFit> {
    let mut rows = risk_intervals(dataset, model);
    // drop covariates that never vary from zero (e.g. I(t > S) when nobody
    // reaches S); they are not identified
    let all_names = model.covariates();
    let keep: Vec<usize> = (0..all_names.len())
        .filter(|&k| rows.iter().any(|r| r.x[k] != 0.0) || k == 0)
        .collect();
    if keep.len() < all_names.len() {
        log::warn!("{model:?}: dropping covariates that are identically zero");
        for r in &mut rows {
            r.x = keep.iter().map(|&k| r.x[k]).collect();
        }
    }
    let names: Vec<&str> = keep.iter().map(|&k| all_names[k]).collect();
    let events = rows.iter().filter(|r| r.event).count();
    if events == 0 {
        return Err(Error::data(format!("{model:?}: no events in the dataset")));
    }
    if let Some(r) = rows.iter().find(|r| r.event && r.stop <= 0.0) {
        return Err(Error::data(format!("{model:?}: event at time {} is not positive", r.stop)));
    }
    let exposure: f64 = rows.iter().map(|r| r.stop - r.start).sum();
    let mut start = vec![0.0; 2 + names.len()];
    start[0] = (events as f64 / exposure).ln();
    // BFGS to a loose tolerance, then Newton steps on the analytic Hessian
    let loose = OptimConfig {
        gradient_tolerance: cfg.gradient_tolerance.max(1e-4 * rows.len() as f64),
        ..*cfg
    };
    let (est, bfgs_iterations) = bfgs_maximize(
        |p| weibull_ph_loglik(&rows, p),
        |p| weibull_ph_gradient(&rows, p),
        &start,
        &loose,
    )?;
    let (est, newton_iterations) = newton_polish(&rows, est, cfg)?;
    let iterations = bfgs_iterations + newton_iterations;
    let h = weibull_ph_hessian(&rows, &est);
    let neg: Vec<Vec<f64>> = h.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let cov = invert(&neg).ok_or_else(|| Error::Numerical {
        message: format!("{model:?}: observed information is singular"),
        estimate: f64::NAN,
    })?;
    let mut coefficients = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let i = 2 + k;
        let var = cov[i][i];
        if !(var > 0.0) {
            return Err(Error::Numerical {
                message: format!("{model:?}: non-positive variance for coefficient {name}"),
                estimate: var,
            });
        }
        let se = var.sqrt();
        let z = est[i] / se;
        coefficients.push(Coefficient {
            name: name.to_string(),
            estimate: est[i],
            se,
            hazard_ratio: est[i].exp(),
            wald_z: z,
            p_value: wald_p_value(z),
        });
    }
    Ok(PrenticeFit {
        model,
        scale: est[0].exp(),
        shape: est[1].exp(),
        coefficients,
        log_likelihood: weibull_ph_loglik(&rows, &est),
        events,
        iterations,
    })
}

/// The three fits plus the proportion of the treatment effect on T explained
/// by S (`1 − β_Z(T | Z, S) / β_Z(T | Z)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrenticeReport {
    pub fits: Vec<PrenticeFit>,
    pub proportion_explained: Option<f64>,
}

impl PrenticeReport {
    pub fn fit(&self, model: PrenticeModel) -> Option<&PrenticeFit> {
        self.fits.iter().find(|f| f.model == model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Runs all three conventional models.
pub fn prentice_report(dataset: &Dataset, cfg: &OptimConfig) -> Result<PrenticeReport> {
    let fits = PrenticeModel::ALL
        .iter()
        .map(|&m| fit_weibull_ph(dataset, m, cfg))
        .collect::<Result<Vec<_>>>()?;
    let bz = |m: PrenticeModel| {
        fits.iter()
            .find(|f| f.model == m)
            .and_then(|f| f.coefficient("z"))
            .map(|c| c.estimate)
    };
    let proportion_explained = match (bz(PrenticeModel::TOnZ), bz(PrenticeModel::TOnZPlusS)) {
        (Some(total), Some(direct)) if total.abs() > 1e-12 => Some(1.0 - direct / total),
        _ => None,
    };
    Ok(PrenticeReport {
        fits,
        proportion_explained,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SubjectRecord;
    use crate::rng::substream;
    use rand::Rng;

    fn toy() -> Dataset {
        let mut rng = substream(9, 0, 0, 0);
        let records = (0..400)
            .map(|i| {
                let z = (i % 2) as u8;
                let s: f64 = -rng.random::<f64>().ln() / if z == 1 { 0.6 } else { 1.0 };
                let t: f64 = -rng.random::<f64>().ln() / 0.5;
                let c = 3.0;
                if s < t && s < c {
                    let t2 = s + -rng.random::<f64>().ln();
                    SubjectRecord {
                        id: i,
                        z,
                        s_time: s,
                        s_event: true,
                        t_time: t2.min(c),
                        t_event: t2 < c,
                    }
                } else {
                    let e = t.min(c);
                    SubjectRecord {
                        id: i,
                        z,
                        s_time: e,
                        s_event: false,
                        t_time: e,
                        t_event: t < c,
                    }
                }
            })
            .collect();
        Dataset::new(records).unwrap()
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let data = toy();
        let mut rng = substream(10, 0, 0, 0);
        for model in PrenticeModel::ALL {
            let rows = risk_intervals(&data, model);
            let p = 2 + model.covariates().len();
            for _ in 0..10 {
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-0.5..0.5)).collect();
                let g = weibull_ph_gradient(&rows, &x);
                let h = weibull_ph_hessian(&rows, &x);
                for i in 0..p {
                    let eps = 1e-6;
                    let mut up = x.clone();
                    let mut dn = x.clone();
                    up[i] += eps;
                    dn[i] -= eps;
                    let fd = (weibull_ph_loglik(&rows, &up) - weibull_ph_loglik(&rows, &dn)) / (2.0 * eps);
                    assert!((g[i] - fd).abs() / fd.abs().max(1.0) < 1e-5, "{model:?} grad {i}: {} vs {fd}", g[i]);
                    let gu = weibull_ph_gradient(&rows, &up);
                    let gd = weibull_ph_gradient(&rows, &dn);
                    for j in 0..p {
                        let fd = (gu[j] - gd[j]) / (2.0 * eps);
                        assert!((h[j][i] - fd).abs() / fd.abs().max(1.0) < 1e-4, "{model:?} hess {j},{i}");
                    }
                }
            }
        }
    }

    #[test]
    fn fit_reaches_a_stationary_point() {
        let data = toy();
        for model in PrenticeModel::ALL {
            let f = fit_weibull_ph(&data, model, &OptimConfig::default()).unwrap();
            assert!(f.coefficients.iter().all(|c| c.se > 0.0));
            for c in &f.coefficients {
                assert!((c.hazard_ratio - c.estimate.exp()).abs() < 1e-12);
                assert!((0.0..=1.0).contains(&c.p_value));
            }
        }
        let f = fit_weibull_ph(&data, PrenticeModel::SOnZ, &OptimConfig::default()).unwrap();
        assert!(f.coefficient("z").unwrap().hazard_ratio < 1.0);
        let post_s = fit_weibull_ph(&data, PrenticeModel::TOnZPlusS, &OptimConfig::default()).unwrap();
        // the death hazard after S (1) is twice the hazard before it (0.5)
        assert!(post_s.coefficient("s").unwrap().estimate > 0.3);
    }

    #[test]
    fn indicator_model_degenerates_without_s() {
        let records: Vec<SubjectRecord> = toy()
            .records
            .iter()
            .map(|r| SubjectRecord {
                s_time: r.t_time,
                s_event: false,
                ..*r
            })
            .collect();
        let data = Dataset::new(records).unwrap();
        let cfg = OptimConfig {
            gradient_tolerance: 1e-10,
            ..OptimConfig::default()
        };
        let a = fit_weibull_ph(&data, PrenticeModel::TOnZ, &cfg).unwrap();
        let b = fit_weibull_ph(&data, PrenticeModel::TOnZPlusS, &cfg).unwrap();
        assert!(b.coefficient("s").is_none());
        let (za, zb) = (a.coefficient("z").unwrap(), b.coefficient("z").unwrap());
        assert!((za.estimate - zb.estimate).abs() < 1e-6);
        assert!((za.se - zb.se).abs() < 1e-6);
        assert!((a.shape - b.shape).abs() < 1e-6);
    }

    #[test]
    fn wald_p_values() {
        assert!((wald_p_value(0.0) - 1.0).abs() < 1e-12);
        assert!((wald_p_value(1.959964) - 0.05).abs() < 1e-6);
        assert!((wald_p_value(-1.959964) - 0.05).abs() < 1e-6);
    }

    #[test]
    fn bfgs_finds_quadratic_maximum() {
        let (x, _) = bfgs_maximize(
            |p| -(p[0] - 1.0).powi(2) - 3.0 * (p[1] + 2.0).powi(2) - p[0] * p[1],
            |p| vec![-2.0 * (p[0] - 1.0) - p[1], -6.0 * (p[1] + 2.0) - p[0]],
            &[0.0, 0.0],
            &OptimConfig {
                gradient_tolerance: 1e-10,
                ..OptimConfig::default()
            },
        )
        .unwrap();
        // stationary point of the quadratic: solve [2 1; 1 6] x = [2, -12]
        assert!((x[0] - 24.0 / 11.0).abs() < 1e-8);
        assert!((x[1] + 26.0 / 11.0).abs() < 1e-8);
    }

    #[test]
    fn zero_event_dataset_rejected() {
        let records = (0..10)
            .map(|i| SubjectRecord {
                id: i,
                z: (i % 2) as u8,
                s_time: 1.0,
                s_event: false,
                t_time: 1.0,
                t_event: false,
            })
            .collect();
        let d = Dataset::new(records).unwrap();
        assert!(matches!(
            fit_weibull_ph(&d, PrenticeModel::SOnZ, &OptimConfig::default()),
            Err(Error::Data(_))
        ));
    }
}
