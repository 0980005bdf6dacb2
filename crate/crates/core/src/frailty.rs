//! Frailty structures: the joint normal law of the six counterfactual frailties
//! `(ω12⁰, ω12¹, ω13⁰, ω13¹, ω23⁰, ω23¹)` and the conditional laws used to draw
//! counterfactual frailties from an arm's observed ones.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FrailtySet;

/// Index of each frailty in the six-dimensional vector.
pub const W12_0: usize = 0;
pub const W12_1: usize = 1;
pub const W13_0: usize = 2;
pub const W13_1: usize = 3;
pub const W23_0: usize = 4;
pub const W23_1: usize = 5;

/// Structural assumption on the frailties within an arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrailtyStructure {
    /// `ω13 = ω23`, with `ω12 ⊥ ω13`.
    #[default]
    #[serde(rename = "EQUAL_13_23", alias = "EQUAL1323")]
    Equal1323,
    /// `ω12 ⊥ ω13 ⊥ ω23`.
    IndependentThree,
    /// All six frailties correlated according to [`FullCorrelation`].
    FullSix,
}

/// Off-diagonal entries of the six-frailty correlation matrix other than the
/// cross-arm correlations `rho_s` (of ω12) and `rho_t` (of ω13), which always
/// come from [`FrailtyConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FullCorrelation {
    /// corr(ω12⁰, ω13⁰)
    pub rho_00: f64,
    /// corr(ω12⁰, ω13¹)
    pub rho_01: f64,
    /// corr(ω12¹, ω13⁰)
    pub rho_10: f64,
    /// corr(ω12¹, ω13¹)
    pub rho_11: f64,
    /// corr(ω12⁰, ω23⁰)
    pub rho_s1: f64,
    /// corr(ω12⁰, ω23¹)
    pub rho_s2: f64,
    /// corr(ω12¹, ω23⁰)
    pub rho_s3: f64,
    /// corr(ω12¹, ω23¹)
    pub rho_s4: f64,
    /// corr(ω13⁰, ω23⁰)
    pub rho_t1: f64,
    /// corr(ω13⁰, ω23¹)
    pub rho_t2: f64,
    /// corr(ω13¹, ω23⁰)
    pub rho_t3: f64,
    /// corr(ω13¹, ω23¹)
    pub rho_t4: f64,
    /// corr(ω23⁰, ω23¹)
    pub rho_st: f64,
}

impl FullCorrelation {
    /// Every listed entry set to `value`.
    pub fn uniform(value: f64) -> Self {
        Self {
            rho_00: value,
            rho_01: value,
            rho_10: value,
            rho_11: value,
            rho_s1: value,
            rho_s2: value,
            rho_s3: value,
            rho_s4: value,
            rho_t1: value,
            rho_t2: value,
            rho_t3: value,
            rho_t4: value,
            rho_st: value,
        }
    }

    /// Sensitivity setting with strongly linked death frailties within each
    /// arm: `rho_t1 = rho_t4 = 0.95`, every other entry 0.5.
    pub fn strong_death_link() -> Self {
        Self {
            rho_t1: 0.95,
            rho_t4: 0.95,
            ..Self::uniform(0.5)
        }
    }

    fn entries(&self) -> [(&'static str, f64); 13] {
        [
            ("rho_00", self.rho_00),
            ("rho_01", self.rho_01),
            ("rho_10", self.rho_10),
            ("rho_11", self.rho_11),
            ("rho_s1", self.rho_s1),
            ("rho_s2", self.rho_s2),
            ("rho_s3", self.rho_s3),
            ("rho_s4", self.rho_s4),
            ("rho_t1", self.rho_t1),
            ("rho_t2", self.rho_t2),
            ("rho_t3", self.rho_t3),
            ("rho_t4", self.rho_t4),
            ("rho_st", self.rho_st),
        ]
    }
}

/// Frailty law configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrailtyConfig {
    pub structure: FrailtyStructure,
    /// Marginal standard deviation of every frailty.
    pub sigma_omega: f64,
    /// Cross-arm correlation of ω12.
    pub rho_s: f64,
    /// Cross-arm correlation of ω13.
    pub rho_t: f64,
    /// Remaining entries, used by [`FrailtyStructure::FullSix`].
    pub full_corr: Option<FullCorrelation>,
}

impl Default for FrailtyConfig {
    fn default() -> Self {
        Self {
            structure: FrailtyStructure::Equal1323,
            sigma_omega: 0.4,
            rho_s: 0.5,
            rho_t: 0.5,
            full_corr: None,
        }
    }
}

impl FrailtyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_omega > 0.0) || !self.sigma_omega.is_finite() {
            return Err(Error::config(format!(
                "sigma_omega must be positive, got {}",
                self.sigma_omega
            )));
        }
        check_rho("rho_s", self.rho_s)?;
        check_rho("rho_t", self.rho_t)?;
        if let Some(full) = &self.full_corr {
            for (name, v) in full.entries() {
                check_rho(name, v)?;
            }
        }
        if self.structure == FrailtyStructure::FullSix && self.full_corr.is_none() {
            return Err(Error::config("FULL_SIX structure requires full_corr"));
        }
        Ok(())
    }

    /// The 6×6 correlation matrix in the order given by the `W*` indices.
    /// Under [`FrailtyStructure::Equal1323`] the ω23 rows duplicate the ω13 rows.
    pub fn correlation_matrix(&self) -> Result<[[f64; 6]; 6]> {
        self.validate()?;
        let mut r = [[0.0; 6]; 6];
        for (i, row) in r.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        let mut set = |i: usize, j: usize, v: f64| {
            r[i][j] = v;
            r[j][i] = v;
        };
        set(W12_0, W12_1, self.rho_s);
        set(W13_0, W13_1, self.rho_t);
        match self.structure {
            FrailtyStructure::Equal1323 => {
                set(W23_0, W23_1, self.rho_t);
                set(W13_0, W23_0, 1.0);
                set(W13_1, W23_1, 1.0);
                set(W13_0, W23_1, self.rho_t);
                set(W13_1, W23_0, self.rho_t);
            }
            FrailtyStructure::IndependentThree => {
                set(W23_0, W23_1, self.rho_t);
            }
            FrailtyStructure::FullSix => {
                let f = self
                    .full_corr
                    .as_ref()
                    .ok_or_else(|| Error::config("FULL_SIX structure requires full_corr"))?;
                set(W12_0, W13_0, f.rho_00);
                set(W12_0, W13_1, f.rho_01);
                set(W12_1, W13_0, f.rho_10);
                set(W12_1, W13_1, f.rho_11);
                set(W12_0, W23_0, f.rho_s1);
                set(W12_0, W23_1, f.rho_s2);
                set(W12_1, W23_0, f.rho_s3);
                set(W12_1, W23_1, f.rho_s4);
                set(W13_0, W23_0, f.rho_t1);
                set(W13_0, W23_1, f.rho_t2);
                set(W13_1, W23_0, f.rho_t3);
                set(W13_1, W23_1, f.rho_t4);
                set(W23_0, W23_1, f.rho_st);
            }
        }
        Ok(r)
    }

    /// Frailty indices that are free within arm `z` (ω23 is omitted when it
    /// aliases ω13).
    pub fn arm_indices(&self, z: usize) -> Vec<usize> {
        match self.structure {
            FrailtyStructure::Equal1323 => vec![W12_0 + z, W13_0 + z],
            _ => vec![W12_0 + z, W13_0 + z, W23_0 + z],
        }
    }

    /// Covariance of the free frailties of arm `z`.
    pub fn within_arm_covariance(&self, z: usize) -> Result<DMatrix<f64>> {
        let r = self.correlation_matrix()?;
        let idx = self.arm_indices(z);
        let s2 = self.sigma_omega * self.sigma_omega;
        Ok(DMatrix::from_fn(idx.len(), idx.len(), |i, j| s2 * r[idx[i]][idx[j]]))
    }
}

fn check_rho(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && (-1.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must lie in [-1, 1], got {v}")))
    }
}

/// Lower-triangular factor `L` with `L Lᵀ = A` for a positive semi-definite
/// `A`. Zero pivots produce zero columns; a negative pivot, or a zero pivot
/// with non-zero residual below it, means `A` is not PSD.
pub fn psd_cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::config("matrix must be square"));
    }
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let tol = 1e-10 * scale;
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return Err(Error::config("matrix must be symmetric"));
            }
        }
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d < -tol {
            return Err(Error::NotPsd { pivot: d });
        }
        if d <= tol {
            for i in (j + 1)..n {
                let mut r = a[(i, j)];
                for k in 0..j {
                    r -= l[(i, k)] * l[(j, k)];
                }
                if r.abs() > 1e-7 * scale {
                    return Err(Error::NotPsd { pivot: d });
                }
            }
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut r = a[(i, j)];
            for k in 0..j {
                r -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = r / ljj;
        }
    }
    Ok(l)
}

fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Joint law of both arms' frailties for one subject.
#[derive(Debug, Clone)]
pub struct JointFrailtyLaw {
    structure: FrailtyStructure,
    /// Cholesky factor of the covariance of the free coordinates.
    factor: DMatrix<f64>,
    /// `(i, j, sign)`: coordinate `i` is exactly `sign` times coordinate `j`.
    aliases: Vec<(usize, usize, f64)>,
}

impl JointFrailtyLaw {
    pub fn new(config: &FrailtyConfig) -> Result<Self> {
        let r = config.correlation_matrix()?;
        let dims = match config.structure {
            FrailtyStructure::Equal1323 => 4,
            _ => 6,
        };
        let s2 = config.sigma_omega * config.sigma_omega;
        let cov = DMatrix::from_fn(dims, dims, |i, j| s2 * r[i][j]);
        let mut aliases = Vec::new();
        for i in 0..dims {
            if let Some(j) = (0..i).find(|&j| r[i][j].abs() == 1.0) {
                aliases.push((i, j, r[i][j]));
            }
        }
        Ok(Self {
            structure: config.structure,
            factor: psd_cholesky(&cov)?,
            aliases,
        })
    }

    /// Draws `(control, treated)` frailties.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (FrailtySet, FrailtySet) {
        let z = standard_normals(rng, self.factor.nrows());
        let mut w = &self.factor * z;
        for &(i, j, sign) in &self.aliases {
            w[i] = sign * w[j];
        }
        match self.structure {
            FrailtyStructure::Equal1323 => (
                FrailtySet::shared_death(w[W12_0], w[W13_0]),
                FrailtySet::shared_death(w[W12_1], w[W13_1]),
            ),
            _ => (
                FrailtySet::new(w[W12_0], w[W13_0], w[W23_0]),
                FrailtySet::new(w[W12_1], w[W13_1], w[W23_1]),
            ),
        }
    }
}

/// Draws `n` subjects' frailty pairs `(control, treated)` from one stream.
pub fn draw_frailties<R: Rng + ?Sized>(
    config: &FrailtyConfig,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(FrailtySet, FrailtySet)>> {
    let law = JointFrailtyLaw::new(config)?;
    Ok((0..n).map(|_| law.draw(rng)).collect())
}

/// Draw from `N(rho * omega_obs, sigma² (1 - rho²))`.
pub fn draw_counterfactual_frailty<R: Rng + ?Sized>(
    omega_obs: f64,
    rho: f64,
    sigma: f64,
    rng: &mut R,
) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    if rho.abs() >= 1.0 {
        return rho.signum() * omega_obs;
    }
    rho * omega_obs + sigma * (1.0 - rho * rho).sqrt() * z
}

/// Conditional law of the other arm's frailties given one arm's frailties.
#[derive(Debug, Clone)]
pub struct CounterfactualLaw {
    config: FrailtyConfig,
    /// Per observed arm: regression matrix and conditional covariance factor.
    general: Option<[(DMatrix<f64>, DMatrix<f64>); 2]>,
}

impl CounterfactualLaw {
    pub fn new(config: &FrailtyConfig) -> Result<Self> {
        config.validate()?;
        let general = match config.structure {
            FrailtyStructure::Equal1323 => None,
            _ => {
                let r = config.correlation_matrix()?;
                let s2 = config.sigma_omega * config.sigma_omega;
                // reject non-PSD joint matrices up front
                psd_cholesky(&DMatrix::from_fn(6, 6, |i, j| s2 * r[i][j]))?;
                let build = |z: usize| -> Result<(DMatrix<f64>, DMatrix<f64>)> {
                    let obs = config.arm_indices(z);
                    let un = config.arm_indices(1 - z);
                    let block = |a: &[usize], b: &[usize]| {
                        DMatrix::from_fn(a.len(), b.len(), |i, j| s2 * r[a[i]][b[j]])
                    };
                    let s_oo = block(&obs, &obs);
                    let s_uo = block(&un, &obs);
                    let s_uu = block(&un, &un);
                    let inv = s_oo
                        .pseudo_inverse(1e-12)
                        .map_err(|e| Error::config(format!("conditional covariance: {e}")))?;
                    let reg = &s_uo * inv;
                    let mut cond = &s_uu - &reg * s_uo.transpose();
                    // symmetrize round-off
                    let c2 = cond.clone();
                    cond = (cond + c2.transpose()) * 0.5;
                    Ok((reg, psd_cholesky(&cond)?))
                };
                Some([build(0)?, build(1)?])
            }
        };
        Ok(Self {
            config: *config,
            general,
        })
    }

    /// Draws the frailties of arm `1 - z` given those observed in arm `z`.
    pub fn draw<R: Rng + ?Sized>(&self, z: usize, observed: &FrailtySet, rng: &mut R) -> FrailtySet {
        match &self.general {
            None => {
                let c = &self.config;
                let w12 = draw_counterfactual_frailty(observed.omega12, c.rho_s, c.sigma_omega, rng);
                let w13 = draw_counterfactual_frailty(observed.omega13, c.rho_t, c.sigma_omega, rng);
                FrailtySet::shared_death(w12, w13)
            }
            Some(parts) => {
                let (reg, factor) = &parts[z];
                let x = DVector::from_vec(vec![observed.omega12, observed.omega13, observed.omega23]);
                let w = reg * x + factor * standard_normals(rng, 3);
                FrailtySet::new(w[0], w[1], w[2])
            }
        }
    }
}
